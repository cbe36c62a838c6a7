//! Trading agents.
//!
//! Each tick an agent runs a perceive → plan → act pipeline over an
//! immutable [`MarketView`]. Planning is delegated to a [`Planner`]: the
//! deterministic game-theoretic [`DefaultBrain`], the rule-based
//! [`heuristic`] baseline, or an [`ExternalBrain`] speaking JSON over HTTP.
//! [`act`] turns the resulting [`Intent`] into concrete ledger calls after
//! re-checking feasibility.

pub mod external;
pub mod heuristic;
pub mod planner;

use std::collections::{BTreeMap, BTreeSet};

use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auctionhouse::{BoardEntry, Phase};
use crate::economics::{linear_valuation, BidHistory};
use crate::ids::{AgentId, AuctionId, Mechanism, TokenId};
use crate::ledger::bid_digest;
use crate::money::{int, Money, Rational};

pub use external::ExternalBrain;
pub use heuristic::heuristic_decide;
pub use planner::{plan, BrainError, DefaultBrain, HeuristicBrain, PlanOutcome, PlanSource, Planner, PlanningContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub agent_id: AgentId,
    pub balance: Money,
    pub utility_per_mhz: Rational,
    pub need_mhz: u64,
    /// Owned tokens and their capacity in MHz.
    pub holdings: BTreeMap<TokenId, u32>,
}

impl AgentState {
    pub fn held_capacity(&self) -> u64 {
        self.holdings.values().map(|c| u64::from(*c)).sum()
    }

    /// Private valuation of a block of `capacity_mhz`.
    pub fn valuation(&self, capacity_mhz: u32) -> Rational {
        linear_valuation(&self.utility_per_mhz, &int(i64::from(capacity_mhz)))
    }
}

/// `max(0, need - held)`.
pub fn demand_gap(state: &AgentState) -> u64 {
    state.need_mhz.saturating_sub(state.held_capacity())
}

/// `max(0, held - need)`.
pub fn surplus_capacity(state: &AgentState) -> u64 {
    state.held_capacity().saturating_sub(state.need_mhz)
}

/// An own sealed bid that has not been resolved yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingBid {
    pub auction: AuctionId,
    pub value: Money,
    pub capacity_mhz: u32,
    #[serde(skip)]
    pub salt: String,
}

/// Result of one of this agent's past bids or purchases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidResult {
    pub auction: AuctionId,
    pub won: bool,
    pub price: Option<Money>,
    pub capacity_mhz: u32,
}

/// What an agent can see: public ledger data plus its own private data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketView {
    pub tick: u64,
    pub mechanism: Mechanism,
    pub open_auctions: Vec<BoardEntry>,
    pub recent_winning_bids: BidHistory,
    /// Competing buyers in a listing (every participant except its seller).
    pub num_buyers: u32,
    pub own_pending: Vec<PendingBid>,
    pub own_results: Vec<BidResult>,
    /// Last posted reserve per own token, exact.
    pub own_last_reserve: BTreeMap<TokenId, Rational>,
    /// Cap on this agent's simultaneously active listings; `None` is unlimited.
    pub max_concurrent_listings: Option<usize>,
}

impl MarketView {
    pub fn pending_capacity(&self) -> u64 {
        self.own_pending.iter().map(|p| u64::from(p.capacity_mhz)).sum()
    }

    pub fn pending_exposure(&self) -> Money {
        self.own_pending.iter().map(|p| p.value).sum()
    }

    pub fn has_pending(&self, auction: AuctionId) -> bool {
        self.own_pending.iter().any(|p| p.auction == auction)
    }

    pub fn listed_tokens(&self) -> BTreeSet<TokenId> {
        self.open_auctions.iter().map(|a| a.token).collect()
    }

    pub fn auction(&self, id: AuctionId) -> Option<&BoardEntry> {
        self.open_auctions.iter().find(|a| a.id == id)
    }
}

/// Demand gap net of capacity already bid for.
pub fn effective_gap(state: &AgentState, view: &MarketView) -> u64 {
    demand_gap(state).saturating_sub(view.pending_capacity())
}

/// Balance not already promised to unresolved sealed bids.
pub fn available_balance(state: &AgentState, view: &MarketView) -> Money {
    let free = state.balance - view.pending_exposure();
    if free.is_negative() {
        Money::ZERO
    } else {
        free
    }
}

/// First owned token not already on the board, provided the capacity left
/// unlisted still exceeds need and the listing cap allows another listing.
pub fn sellable_token(state: &AgentState, view: &MarketView) -> Option<(TokenId, u32)> {
    let listed = view.listed_tokens();
    let own_listings = view.open_auctions.iter().filter(|a| a.seller == state.agent_id).count();
    if view.max_concurrent_listings.is_some_and(|m| own_listings >= m) {
        return None;
    }
    let idle: Vec<(TokenId, u32)> = state.holdings.iter().filter(|(t, _)| !listed.contains(t)).map(|(t, c)| (*t, *c)).collect();
    let idle_capacity: u64 = idle.iter().map(|(_, c)| u64::from(*c)).sum();
    if idle_capacity <= state.need_mhz {
        return None;
    }
    idle.first().copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketStructure {
    Homogeneous,
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandTrend {
    Stable,
    Fading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub market_structure: MarketStructure,
    pub win_rate: f64,
    pub demand_trend: DemandTrend,
    pub realized_profit_per_win: f64,
    pub risk_note: String,
}

/// Coefficient of variation below which the market reads as homogeneous.
pub const HOMOGENEITY_CV: f64 = 0.05;

/// Analyst stage: win rate, market structure and demand trend.
pub fn perceive(view: &MarketView, state: &AgentState) -> Assessment {
    let attempts = view.own_results.len();
    let wins: Vec<&BidResult> = view.own_results.iter().filter(|r| r.won).collect();
    let win_rate = if attempts == 0 { 0.0 } else { wins.len() as f64 / attempts as f64 };
    let realized_profit_per_win = if wins.is_empty() {
        0.0
    } else {
        let total: f64 = wins
            .iter()
            .map(|r| {
                let v = state.valuation(r.capacity_mhz).to_f64().unwrap_or(0.0);
                v - r.price.map(Money::as_units_f64).unwrap_or(0.0)
            })
            .sum();
        total / wins.len() as f64
    };

    let bids: Vec<f64> = view.recent_winning_bids.bids().map(|b| b.to_f64().unwrap_or(0.0)).collect();
    let market_structure = if bids.len() >= 2 && coefficient_of_variation(&bids) < HOMOGENEITY_CV {
        MarketStructure::Homogeneous
    } else {
        MarketStructure::Heterogeneous
    };
    let demand_trend = if is_fading(&bids) { DemandTrend::Fading } else { DemandTrend::Stable };

    let mut notes = Vec::new();
    if demand_trend == DemandTrend::Fading {
        notes.push("winning prices falling");
    }
    if market_structure == MarketStructure::Homogeneous {
        notes.push("competitors bid alike; expect thin margins");
    }
    if attempts > 0 && win_rate == 0.0 {
        notes.push("no wins yet");
    }
    if notes.is_empty() {
        notes.push("no elevated risk");
    }
    Assessment {
        market_structure,
        win_rate,
        demand_trend,
        realized_profit_per_win,
        risk_note: notes.join("; "),
    }
}

fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Splits the most recent bids into three equal consecutive windows and
/// reports whether their means strictly decrease.
fn is_fading(bids: &[f64]) -> bool {
    let w = bids.len() / 3;
    if w == 0 {
        return false;
    }
    let tail = &bids[bids.len() - 3 * w..];
    let means: Vec<f64> = tail.chunks(w).map(|c| c.iter().sum::<f64>() / w as f64).collect();
    means[0] > means[1] && means[1] > means[2]
}

/// Planner output: what the agent wants to do this tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "intent", rename_all = "snake_case")]
pub enum Intent {
    /// Bid up to `value` (sealed) or buy at the posted ask no higher than `value` (direct sale).
    Buy { auction: AuctionId, value: Rational },
    Sell { token: TokenId, mechanism: Mechanism, reserve: Rational },
    Idle,
}

/// Concrete contract call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    StartAuction { token: TokenId, mechanism: Mechanism, reserve: Money },
    Relist { token: TokenId, mechanism: Mechanism, reserve: Money },
    PlaceBid {
        auction: AuctionId,
        digest: String,
        #[serde(skip)]
        value: Money,
        #[serde(skip)]
        salt: String,
    },
    Reveal {
        auction: AuctionId,
        #[serde(skip)]
        value: Money,
        #[serde(skip)]
        salt: String,
    },
    BuyNow { auction: AuctionId, price: Money },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Rejection {
    #[error("{0} is not owned")]
    NotOwned(TokenId),
    #[error("{0} is already on the board")]
    AlreadyListed(TokenId),
    #[error("negative reserve")]
    NegativeReserve,
    #[error("{0} is not open")]
    AuctionNotOpen(AuctionId),
    #[error("cannot trade on own listing {0}")]
    OwnListing(AuctionId),
    #[error("value {value} exceeds available balance {available}")]
    OverBudget { value: Money, available: Money },
    #[error("ask {ask} exceeds willingness {value}")]
    AskAboveWillingness { ask: Money, value: Money },
    #[error("negative bid")]
    NegativeBid,
}

/// Generates a fresh 16-byte hex salt.
pub fn fresh_salt<R: Rng + ?Sized>(rng: &mut R) -> String {
    let mut bytes = [0u8; 16];
    rng.fill(&mut bytes);
    hex::encode(bytes)
}

/// Executor stage: validates an intent against current holdings and budget
/// and emits the contract calls that realize it. Sealed bids become a
/// single commit now; the reveal is issued later from the pending-bid memory.
pub fn act<R: Rng + ?Sized>(intent: &Intent, state: &AgentState, view: &MarketView, rng: &mut R) -> Result<Vec<Action>, Rejection> {
    match intent {
        Intent::Idle => Ok(Vec::new()),
        Intent::Sell { token, mechanism, reserve } => {
            if !state.holdings.contains_key(token) {
                return Err(Rejection::NotOwned(*token));
            }
            if view.listed_tokens().contains(token) {
                return Err(Rejection::AlreadyListed(*token));
            }
            let posted = Money::ceil_from(reserve);
            if posted.is_negative() {
                return Err(Rejection::NegativeReserve);
            }
            let action = if view.own_last_reserve.contains_key(token) {
                Action::Relist { token: *token, mechanism: *mechanism, reserve: posted }
            } else {
                Action::StartAuction { token: *token, mechanism: *mechanism, reserve: posted }
            };
            Ok(vec![action])
        }
        Intent::Buy { auction, value } => {
            let entry = view.auction(*auction).filter(|a| a.phase == Phase::Open).ok_or(Rejection::AuctionNotOpen(*auction))?;
            if entry.seller == state.agent_id {
                return Err(Rejection::OwnListing(*auction));
            }
            let value = Money::floor_from(value);
            if value.is_negative() {
                return Err(Rejection::NegativeBid);
            }
            let available = available_balance(state, view);
            match entry.mechanism {
                Mechanism::DirectSale => {
                    if entry.reserve > value {
                        return Err(Rejection::AskAboveWillingness { ask: entry.reserve, value });
                    }
                    if entry.reserve > available {
                        return Err(Rejection::OverBudget { value: entry.reserve, available });
                    }
                    Ok(vec![Action::BuyNow { auction: *auction, price: entry.reserve }])
                }
                Mechanism::FirstPrice | Mechanism::SecondPrice => {
                    if value > available {
                        return Err(Rejection::OverBudget { value, available });
                    }
                    let salt = fresh_salt(rng);
                    let digest = bid_digest(&salt, value);
                    Ok(vec![Action::PlaceBid { auction: *auction, digest, value, salt }])
                }
            }
        }
    }
}

/// Reveals owed this tick: pending bids whose auction has entered the reveal phase.
pub fn due_reveals(view: &MarketView) -> Vec<Action> {
    view.own_pending
        .iter()
        .filter(|p| view.auction(p.auction).is_some_and(|a| a.phase == Phase::Revealing))
        .map(|p| Action::Reveal { auction: p.auction, value: p.value, salt: p.salt.clone() })
        .collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn state(u: i64, need: u64, holdings: &[(u32, u32)], balance_units: i64) -> AgentState {
        AgentState {
            agent_id: AgentId::new("agent-1"),
            balance: Money::from_units(balance_units),
            utility_per_mhz: int(u),
            need_mhz: need,
            holdings: holdings.iter().map(|(t, c)| (TokenId(*t), *c)).collect(),
        }
    }

    pub fn entry(id: u64, token: u32, mechanism: Mechanism, reserve_units: i64, phase: Phase) -> BoardEntry {
        BoardEntry {
            id: AuctionId(id),
            token: TokenId(token),
            capacity_mhz: 10,
            seller: AgentId::new("agent-0"),
            mechanism,
            reserve: Money::from_units(reserve_units),
            phase,
            opened_tick: 0,
            commit_count: 0,
        }
    }

    pub fn view(mechanism: Mechanism, open: Vec<BoardEntry>) -> MarketView {
        MarketView {
            tick: 1,
            mechanism,
            open_auctions: open,
            recent_winning_bids: BidHistory::new(20),
            num_buyers: 3,
            own_pending: Vec::new(),
            own_results: Vec::new(),
            own_last_reserve: BTreeMap::new(),
            max_concurrent_listings: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::money::ratio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn demand_gap_examples() {
        let short = state(10, 60, &[(1, 20), (2, 20)], 0);
        assert_eq!(demand_gap(&short), 20);
        let long = state(10, 40, &[(1, 20), (2, 20), (3, 20)], 0);
        assert_eq!(demand_gap(&long), 0);
        assert_eq!(surplus_capacity(&long), 20);
    }

    #[test]
    fn perceive_empty_history() {
        let a = perceive(&view(Mechanism::FirstPrice, vec![]), &state(20, 0, &[], 0));
        assert_eq!(a.win_rate, 0.0);
        assert_eq!(a.demand_trend, DemandTrend::Stable);
    }

    #[test]
    fn perceive_structure_and_trend() {
        let mut v = view(Mechanism::FirstPrice, vec![]);
        v.recent_winning_bids = BidHistory::from_bids(20, [int(100), int(100), int(100)]);
        assert_eq!(perceive(&v, &state(20, 0, &[], 0)).market_structure, MarketStructure::Homogeneous);

        v.recent_winning_bids = BidHistory::from_bids(20, [int(120), int(110), int(100)]);
        let a = perceive(&v, &state(20, 0, &[], 0));
        assert_eq!(a.demand_trend, DemandTrend::Fading);
        assert_eq!(a.market_structure, MarketStructure::Heterogeneous);

        v.recent_winning_bids = BidHistory::from_bids(20, [int(100), int(110), int(120)]);
        assert_eq!(perceive(&v, &state(20, 0, &[], 0)).demand_trend, DemandTrend::Stable);
    }

    #[test]
    fn perceive_win_rate_and_profit() {
        let mut v = view(Mechanism::SecondPrice, vec![]);
        v.own_results = vec![
            BidResult { auction: AuctionId(1), won: true, price: Some(Money::from_units(150)), capacity_mhz: 10 },
            BidResult { auction: AuctionId(2), won: false, price: None, capacity_mhz: 10 },
        ];
        let a = perceive(&v, &state(20, 0, &[], 0));
        assert_eq!(a.win_rate, 0.5);
        assert_eq!(a.realized_profit_per_win, 50.0);
    }

    #[test]
    fn act_rejects_unowned_sell_and_overbudget_bid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = state(20, 40, &[(1, 10)], 100);
        let v = view(Mechanism::FirstPrice, vec![entry(1, 9, Mechanism::FirstPrice, 50, Phase::Open)]);
        let sell = Intent::Sell { token: TokenId(7), mechanism: Mechanism::FirstPrice, reserve: int(10) };
        assert_eq!(act(&sell, &s, &v, &mut rng), Err(Rejection::NotOwned(TokenId(7))));
        let buy = Intent::Buy { auction: AuctionId(1), value: int(150) };
        assert!(matches!(act(&buy, &s, &v, &mut rng), Err(Rejection::OverBudget { .. })));
    }

    #[test]
    fn act_valid_sealed_bid_commits_once_and_queues_reveal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = state(20, 40, &[], 5000);
        let mut v = view(Mechanism::SecondPrice, vec![entry(1, 9, Mechanism::SecondPrice, 50, Phase::Open)]);
        let actions = act(&Intent::Buy { auction: AuctionId(1), value: ratio(400, 3) }, &s, &v, &mut rng).unwrap();
        assert_eq!(actions.len(), 1);
        let Action::PlaceBid { digest, value, salt, .. } = &actions[0] else { panic!("expected commit") };
        assert_eq!(*value, Money::from_cents(13333));
        assert_eq!(salt.len(), 32);
        assert_eq!(digest, &bid_digest(salt, *value));
        assert!(due_reveals(&v).is_empty());

        v.own_pending.push(PendingBid { auction: AuctionId(1), value: *value, capacity_mhz: 10, salt: salt.clone() });
        v.open_auctions[0].phase = Phase::Revealing;
        assert_eq!(due_reveals(&v), vec![Action::Reveal { auction: AuctionId(1), value: *value, salt: salt.clone() }]);
    }

    #[test]
    fn act_direct_sale_checks_ask() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = state(10, 40, &[], 5000);
        let v = view(Mechanism::DirectSale, vec![entry(1, 9, Mechanism::DirectSale, 115, Phase::Open)]);
        let ok = act(&Intent::Buy { auction: AuctionId(1), value: int(200) }, &s, &v, &mut rng).unwrap();
        assert_eq!(ok, vec![Action::BuyNow { auction: AuctionId(1), price: Money::from_units(115) }]);
        let low = act(&Intent::Buy { auction: AuctionId(1), value: int(100) }, &s, &v, &mut rng);
        assert!(matches!(low, Err(Rejection::AskAboveWillingness { .. })));
    }

    #[test]
    fn act_sell_distinguishes_relist() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = state(5, 0, &[(1, 10), (2, 10)], 0);
        let mut v = view(Mechanism::DirectSale, vec![entry(1, 2, Mechanism::DirectSale, 115, Phase::Open)]);
        let sell = |t| Intent::Sell { token: TokenId(t), mechanism: Mechanism::DirectSale, reserve: ratio(1035, 10) };
        assert_eq!(act(&sell(2), &s, &v, &mut rng), Err(Rejection::AlreadyListed(TokenId(2))));
        assert!(matches!(act(&sell(1), &s, &v, &mut rng).unwrap()[0], Action::StartAuction { .. }));
        v.own_last_reserve.insert(TokenId(1), int(115));
        assert_eq!(
            act(&sell(1), &s, &v, &mut rng).unwrap(),
            vec![Action::Relist { token: TokenId(1), mechanism: Mechanism::DirectSale, reserve: Money::from_cents(10350) }]
        );
    }

    #[test]
    fn exposure_reduces_available_balance() {
        let s = state(20, 40, &[], 300);
        let mut v = view(Mechanism::FirstPrice, vec![]);
        v.own_pending.push(PendingBid { auction: AuctionId(3), value: Money::from_units(200), capacity_mhz: 10, salt: String::new() });
        assert_eq!(available_balance(&s, &v), Money::from_units(100));
        assert_eq!(effective_gap(&s, &v), 30);
    }
}
