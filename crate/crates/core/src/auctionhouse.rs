//! Per-token sale contracts: direct sale, first-price and second-price
//! sealed-bid auctions with a commit/reveal lifecycle.
//!
//! Sealed auctions move `Open -> Closed -> Revealing -> Ended`; a direct sale
//! goes straight from `Open` to `Ended`, either through [`AuctionHouse::buy_now`]
//! or by expiring unsold in [`AuctionHouse::finalize`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::ids::{AgentId, AuctionId, Mechanism, TokenId};
use crate::ledger::{auctioneer, bid_digest, Ledger, LedgerError, TradeRecord, TxDraft, TxKind};
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Open,
    Closed,
    Revealing,
    Ended,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuctionError {
    #[error("unknown auction {0}")]
    UnknownAuction(AuctionId),
    #[error("{agent} does not own {token}")]
    NotOwner { token: TokenId, agent: AgentId },
    #[error("{token} is already listed in {auction}")]
    AlreadyListed { token: TokenId, auction: AuctionId },
    #[error("{auction} is a {actual} listing")]
    WrongMechanism { auction: AuctionId, actual: Mechanism },
    #[error("{auction} is {actual:?}, operation needs {expected:?}")]
    PhaseViolation { auction: AuctionId, expected: Phase, actual: Phase },
    #[error("{0} has already ended")]
    AlreadyEnded(AuctionId),
    #[error("seller {0} cannot trade with itself")]
    SelfDealing(AgentId),
    #[error("{agent} cannot cover {needed} (balance {available})")]
    InsufficientFunds { agent: AgentId, needed: Money, available: Money },
    #[error("reveal by {bidder} in {auction} does not match the committed digest")]
    DigestMismatch { auction: AuctionId, bidder: AgentId },
    #[error("{bidder} has no commit in {auction}")]
    NoCommit { auction: AuctionId, bidder: AgentId },
    #[error("reserve must be non-negative, got {0}")]
    NegativeReserve(Money),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

pub type AuctionResult<T> = Result<T, AuctionError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitEntry {
    pub digest: String,
    /// Global commit sequence number; lower wins ties.
    pub order: u64,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealEntry {
    pub salt: String,
    pub value: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub winner: Option<AgentId>,
    pub clearing_price: Option<Money>,
    pub losing_bids: Vec<(AgentId, Money)>,
    pub unsold: bool,
    pub trade: Option<TradeRecord>,
}

impl Outcome {
    fn unsold(losing_bids: Vec<(AgentId, Money)>) -> Self {
        Outcome { winner: None, clearing_price: None, losing_bids, unsold: true, trade: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Auction {
    pub id: AuctionId,
    pub token_id: TokenId,
    pub capacity_mhz: u32,
    pub mechanism: Mechanism,
    pub seller: AgentId,
    pub reserve: Money,
    pub phase: Phase,
    pub opened_tick: u64,
    pub closed_tick: Option<u64>,
    pub ended_tick: Option<u64>,
    pub commits: BTreeMap<AgentId, CommitEntry>,
    pub reveals: BTreeMap<AgentId, RevealEntry>,
    pub outcome: Option<Outcome>,
}

impl Auction {
    pub fn is_active(&self) -> bool {
        self.phase != Phase::Ended
    }
}

/// Public auction-board entry; never carries bid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardEntry {
    pub id: AuctionId,
    pub token: TokenId,
    pub capacity_mhz: u32,
    pub seller: AgentId,
    pub mechanism: Mechanism,
    pub reserve: Money,
    pub phase: Phase,
    pub opened_tick: u64,
    pub commit_count: usize,
}

pub fn auction_key(id: AuctionId) -> String {
    format!("auction/{id}")
}

pub fn commit_key(id: AuctionId, bidder: &AgentId) -> String {
    format!("commit/{id}/{bidder}")
}

pub fn reveal_key(id: AuctionId, bidder: &AgentId) -> String {
    format!("reveal/{id}/{bidder}")
}

/// Private-collection key under which a bidder keeps its bid preimage.
pub fn private_bid_key(id: AuctionId, bidder: &AgentId) -> String {
    format!("bid:{id}:{bidder}")
}

/// A revealed sealed bid as seen by the clearing rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SealedBid {
    pub value: Money,
    pub order: u64,
}

/// Winner index and clearing price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clearing {
    pub winner: usize,
    pub price: Money,
}

/// Winner determination over revealed bids.
///
/// Only bids at or above the reserve qualify. The highest qualifying value
/// wins, ties going to the lowest commit order. First-price pays the winning
/// bid; second-price pays the highest other qualifying bid, or the winner's
/// own bid when no qualifying competitor remains.
pub fn clear_sealed(mechanism: Mechanism, bids: &[SealedBid], reserve: Money) -> Option<Clearing> {
    let mut best: Option<usize> = None;
    for (i, b) in bids.iter().enumerate() {
        if b.value < reserve {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(j) => {
                let cur = &bids[j];
                if b.value > cur.value || (b.value == cur.value && b.order < cur.order) {
                    Some(i)
                } else {
                    Some(j)
                }
            }
        };
    }
    let winner = best?;
    let price = match mechanism {
        Mechanism::FirstPrice | Mechanism::DirectSale => bids[winner].value,
        Mechanism::SecondPrice => bids
            .iter()
            .enumerate()
            .filter(|(i, b)| *i != winner && b.value >= reserve)
            .map(|(_, b)| b.value)
            .max()
            .unwrap_or(bids[winner].value),
    };
    Some(Clearing { winner, price })
}

/// The auction contract. Holds no ledger state of its own beyond the
/// auction records; every mutation is also recorded as a ledger transaction.
#[derive(Debug, Default)]
pub struct AuctionHouse {
    auctions: BTreeMap<AuctionId, Auction>,
    active_by_token: BTreeMap<TokenId, AuctionId>,
    next_id: u64,
    commit_counter: u64,
    leak_plaintext_commits: bool,
}

impl AuctionHouse {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fault injection for privacy-scan negative tests: commits also write
    /// their plaintext value into the world state.
    #[doc(hidden)]
    pub fn set_leak_plaintext_commits(&mut self, leak: bool) {
        self.leak_plaintext_commits = leak;
    }

    pub fn auction(&self, id: AuctionId) -> Option<&Auction> {
        self.auctions.get(&id)
    }

    pub fn auctions(&self) -> impl Iterator<Item = &Auction> {
        self.auctions.values()
    }

    pub fn active_listing(&self, token: TokenId) -> Option<AuctionId> {
        self.active_by_token.get(&token).copied()
    }

    fn get(&self, id: AuctionId) -> AuctionResult<&Auction> {
        self.auctions.get(&id).ok_or(AuctionError::UnknownAuction(id))
    }

    fn expect_phase(auction: &Auction, expected: Phase) -> AuctionResult<()> {
        if auction.phase == expected {
            Ok(())
        } else if auction.phase == Phase::Ended {
            Err(AuctionError::AlreadyEnded(auction.id))
        } else {
            Err(AuctionError::PhaseViolation { auction: auction.id, expected, actual: auction.phase })
        }
    }

    fn public_view(a: &Auction) -> serde_json::Value {
        json!({
            "id": a.id,
            "token": a.token_id,
            "mechanism": a.mechanism,
            "seller": a.seller,
            "reserve": a.reserve,
            "phase": a.phase,
            "opened_tick": a.opened_tick,
            "commit_count": a.commits.len(),
            "winner": a.outcome.as_ref().and_then(|o| o.winner.clone()),
            "clearing_price": a.outcome.as_ref().and_then(|o| o.clearing_price),
        })
    }

    pub fn create_listing(
        &mut self,
        ledger: &mut Ledger,
        token_id: TokenId,
        seller: &AgentId,
        mechanism: Mechanism,
        reserve: Money,
    ) -> AuctionResult<&Auction> {
        let token = ledger.token(token_id).ok_or(LedgerError::UnknownToken(token_id))?;
        if &token.owner != seller {
            return Err(AuctionError::NotOwner { token: token_id, agent: seller.clone() });
        }
        if token.expired {
            return Err(LedgerError::Expired(token_id).into());
        }
        if let Some(&auction) = self.active_by_token.get(&token_id) {
            return Err(AuctionError::AlreadyListed { token: token_id, auction });
        }
        if reserve.is_negative() {
            return Err(AuctionError::NegativeReserve(reserve));
        }
        self.next_id += 1;
        let id = AuctionId(self.next_id);
        let auction = Auction {
            id,
            token_id,
            capacity_mhz: token.capacity_mhz,
            mechanism,
            seller: seller.clone(),
            reserve,
            phase: Phase::Open,
            opened_tick: ledger.tick(),
            closed_tick: None,
            ended_tick: None,
            commits: BTreeMap::new(),
            reveals: BTreeMap::new(),
            outcome: None,
        };
        let draft = TxDraft::new(
            seller.clone(),
            TxKind::List,
            json!({ "auction": id, "token": token_id, "mechanism": mechanism, "reserve": reserve }),
        )
        .world(auction_key(id), Self::public_view(&auction));
        ledger.append(draft);
        self.active_by_token.insert(token_id, id);
        self.auctions.insert(id, auction);
        Ok(&self.auctions[&id])
    }

    /// Immediate purchase of a direct-sale listing at its posted price.
    pub fn buy_now(&mut self, ledger: &mut Ledger, id: AuctionId, buyer: &AgentId) -> AuctionResult<Outcome> {
        let auction = self.get(id)?;
        if auction.mechanism != Mechanism::DirectSale {
            return Err(AuctionError::WrongMechanism { auction: id, actual: auction.mechanism });
        }
        Self::expect_phase(auction, Phase::Open)?;
        if &auction.seller == buyer {
            return Err(AuctionError::SelfDealing(buyer.clone()));
        }
        let available = ledger.balance(buyer).ok_or_else(|| LedgerError::UnknownAgent(buyer.clone()))?;
        if available < auction.reserve {
            return Err(AuctionError::InsufficientFunds { agent: buyer.clone(), needed: auction.reserve, available });
        }
        let (token, seller, price) = (auction.token_id, auction.seller.clone(), auction.reserve);
        ledger.append(TxDraft::new(buyer.clone(), TxKind::BuyNow, json!({ "auction": id, "price": price })));
        let trade = ledger.settle(token, buyer, &seller, price, Some((id, Mechanism::DirectSale)))?;
        let outcome = Outcome {
            winner: Some(buyer.clone()),
            clearing_price: Some(price),
            losing_bids: Vec::new(),
            unsold: false,
            trade: Some(trade),
        };
        self.end(ledger, id, outcome.clone());
        Ok(outcome)
    }

    pub fn commit_bid(&mut self, ledger: &mut Ledger, id: AuctionId, bidder: &AgentId, digest: &str) -> AuctionResult<()> {
        self.commit_inner(ledger, id, bidder, digest, None)
    }

    /// Same as [`commit_bid`](Self::commit_bid), but lets the fault-injection
    /// switch see the plaintext.
    pub(crate) fn commit_with_plaintext(
        &mut self,
        ledger: &mut Ledger,
        id: AuctionId,
        bidder: &AgentId,
        digest: &str,
        plaintext: Money,
    ) -> AuctionResult<()> {
        self.commit_inner(ledger, id, bidder, digest, Some(plaintext))
    }

    fn commit_inner(
        &mut self,
        ledger: &mut Ledger,
        id: AuctionId,
        bidder: &AgentId,
        digest: &str,
        plaintext: Option<Money>,
    ) -> AuctionResult<()> {
        let auction = self.get(id)?;
        if !auction.mechanism.is_sealed() {
            return Err(AuctionError::WrongMechanism { auction: id, actual: auction.mechanism });
        }
        Self::expect_phase(auction, Phase::Open)?;
        if &auction.seller == bidder {
            return Err(AuctionError::SelfDealing(bidder.clone()));
        }
        if !ledger.has_account(bidder) {
            return Err(LedgerError::UnknownAgent(bidder.clone()).into());
        }
        self.commit_counter += 1;
        let entry = CommitEntry { digest: digest.to_string(), order: self.commit_counter, tick: ledger.tick() };
        let auction = self.auctions.get_mut(&id).expect("checked above");
        auction.commits.insert(bidder.clone(), entry);
        let committed = match (self.leak_plaintext_commits, plaintext) {
            (true, Some(v)) => json!({ "digest": digest, "value": v }),
            _ => json!(digest),
        };
        let draft = TxDraft::new(bidder.clone(), TxKind::Commit, json!({ "auction": id, "digest": digest }))
            .world(commit_key(id, bidder), committed)
            .world(auction_key(id), Self::public_view(auction));
        ledger.append(draft);
        Ok(())
    }

    /// Ends the commit phase; the auction moves through `Closed` into `Revealing`.
    pub fn close_bidding(&mut self, ledger: &mut Ledger, id: AuctionId) -> AuctionResult<&Auction> {
        let auction = self.get(id)?;
        if !auction.mechanism.is_sealed() {
            return Err(AuctionError::WrongMechanism { auction: id, actual: auction.mechanism });
        }
        Self::expect_phase(auction, Phase::Open)?;
        let tick = ledger.tick();
        let auction = self.auctions.get_mut(&id).expect("checked above");
        auction.phase = Phase::Closed;
        auction.closed_tick = Some(tick);
        ledger.append(
            TxDraft::new(auctioneer(), TxKind::Close, json!({ "auction": id, "commits": auction.commits.len() }))
                .world(auction_key(id), Self::public_view(auction)),
        );
        auction.phase = Phase::Revealing;
        ledger.append(
            TxDraft::new(auctioneer(), TxKind::Close, json!({ "auction": id, "phase": Phase::Revealing }))
                .world(auction_key(id), Self::public_view(auction)),
        );
        Ok(auction)
    }

    pub fn reveal_bid(
        &mut self,
        ledger: &mut Ledger,
        id: AuctionId,
        bidder: &AgentId,
        salt: &str,
        value: Money,
    ) -> AuctionResult<()> {
        let auction = self.get(id)?;
        Self::expect_phase(auction, Phase::Revealing)?;
        let commit = auction.commits.get(bidder).ok_or_else(|| AuctionError::NoCommit { auction: id, bidder: bidder.clone() })?;
        if bid_digest(salt, value) != commit.digest {
            ledger.append(TxDraft::new(
                bidder.clone(),
                TxKind::Reveal,
                json!({ "auction": id, "accepted": false, "reason": "digest-mismatch" }),
            ));
            return Err(AuctionError::DigestMismatch { auction: id, bidder: bidder.clone() });
        }
        let auction = self.auctions.get_mut(&id).expect("checked above");
        auction.reveals.insert(bidder.clone(), RevealEntry { salt: salt.to_string(), value });
        ledger.append(
            TxDraft::new(bidder.clone(), TxKind::Reveal, json!({ "auction": id, "accepted": true }))
                .world(reveal_key(id, bidder), json!({ "salt": salt, "value": value })),
        );
        Ok(())
    }

    /// Determines the winner and settles. A direct sale still open is ended
    /// unsold; sealed auctions must be in the reveal phase. Unrevealed commits
    /// count as abstentions.
    pub fn finalize(&mut self, ledger: &mut Ledger, id: AuctionId) -> AuctionResult<Outcome> {
        let auction = self.get(id)?;
        if auction.mechanism == Mechanism::DirectSale {
            Self::expect_phase(auction, Phase::Open)?;
            let outcome = Outcome::unsold(Vec::new());
            self.end(ledger, id, outcome.clone());
            return Ok(outcome);
        }
        Self::expect_phase(auction, Phase::Revealing)?;

        let mut bidders: Vec<(AgentId, SealedBid)> = auction
            .reveals
            .iter()
            .map(|(who, r)| (who.clone(), SealedBid { value: r.value, order: auction.commits[who].order }))
            .collect();
        let (mechanism, reserve, token, seller) = (auction.mechanism, auction.reserve, auction.token_id, auction.seller.clone());

        // A winner that cannot pay is dropped and the rule re-run.
        let outcome = loop {
            let bids: Vec<SealedBid> = bidders.iter().map(|(_, b)| *b).collect();
            let Some(clearing) = clear_sealed(mechanism, &bids, reserve) else {
                let losing = bidders.iter().map(|(w, b)| (w.clone(), b.value)).collect();
                break Outcome::unsold(losing);
            };
            let winner = bidders[clearing.winner].0.clone();
            match ledger.settle(token, &winner, &seller, clearing.price, Some((id, mechanism))) {
                Ok(trade) => {
                    let losing = bidders
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != clearing.winner)
                        .map(|(_, (w, b))| (w.clone(), b.value))
                        .collect();
                    break Outcome {
                        winner: Some(winner),
                        clearing_price: Some(clearing.price),
                        losing_bids: losing,
                        unsold: false,
                        trade: Some(trade),
                    };
                }
                Err(LedgerError::InsufficientFunds { .. }) => {
                    log::warn!("{id}: winner {winner} cannot cover {}, disqualified", clearing.price);
                    bidders.remove(clearing.winner);
                }
                Err(e) => return Err(e.into()),
            }
        };
        self.end(ledger, id, outcome.clone());
        Ok(outcome)
    }

    fn end(&mut self, ledger: &mut Ledger, id: AuctionId, outcome: Outcome) {
        let tick = ledger.tick();
        let auction = self.auctions.get_mut(&id).expect("auction exists");
        auction.phase = Phase::Ended;
        auction.ended_tick = Some(tick);
        auction.outcome = Some(outcome);
        self.active_by_token.remove(&auction.token_id);
        let o = auction.outcome.as_ref().expect("just set");
        ledger.append(
            TxDraft::new(
                auctioneer(),
                TxKind::Finalize,
                json!({ "auction": id, "winner": o.winner, "price": o.clearing_price, "unsold": o.unsold }),
            )
            .world(auction_key(id), Self::public_view(auction)),
        );
    }

    /// Open and revealing auctions, ordered by id.
    pub fn board(&self) -> Vec<BoardEntry> {
        self.auctions
            .values()
            .filter(|a| matches!(a.phase, Phase::Open | Phase::Closed | Phase::Revealing))
            .map(|a| BoardEntry {
                id: a.id,
                token: a.token_id,
                capacity_mhz: a.capacity_mhz,
                seller: a.seller.clone(),
                mechanism: a.mechanism,
                reserve: a.reserve,
                phase: a.phase,
                opened_tick: a.opened_tick,
                commit_count: a.commits.len(),
            })
            .collect()
    }

    pub fn board_json(&self) -> String {
        serde_json::to_string(&self.board()).expect("board serializes")
    }
}
