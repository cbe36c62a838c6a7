//! In-process permissioned ledger.
//!
//! Every mutation is a [`Transaction`] appended to an immutable log and
//! applied in a single serialized loop. The public [`WorldState`] is the fold
//! of all `world_writes`; private collections hold plaintext that only the
//! owning organization and the auctioneer can read, with a digest mirrored
//! into the world state under the same key.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::{AgentId, AuctionId, Mechanism, TokenId};
use crate::money::Money;

/// Identity allowed to read every private collection.
pub const AUCTIONEER: &str = "auctioneer";

pub fn auctioneer() -> AgentId {
    AgentId::new(AUCTIONEER)
}

/// Hex SHA-256 of an arbitrary string.
pub fn sha256_hex(data: &str) -> String {
    hex::encode(Sha256::digest(data.as_bytes()))
}

/// Commit digest: SHA-256 over `salt ":" cents`.
pub fn bid_digest(salt: &str, value: Money) -> String {
    sha256_hex(&bid_preimage(salt, value))
}

pub fn bid_preimage(salt: &str, value: Money) -> String {
    format!("{salt}:{}", value.cents_string())
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("token {0} already minted")]
    DuplicateToken(TokenId),
    #[error("account {0} already exists")]
    DuplicateAccount(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("unknown token {0}")]
    UnknownToken(TokenId),
    #[error("invalid token descriptor: {0}")]
    InvalidToken(String),
    #[error("insufficient funds: {agent} needs {needed}, has {available}")]
    InsufficientFunds { agent: AgentId, needed: Money, available: Money },
    #[error("{claimed} does not own {token} (owner is {owner}); rejected as double-spend")]
    NotOwner { token: TokenId, claimed: AgentId, owner: AgentId },
    #[error("negative amount {0}")]
    NegativeAmount(Money),
    #[error("token {0} has expired")]
    Expired(TokenId),
    #[error("{caller} may not access private data of {org}")]
    AccessDenied { caller: AgentId, org: AgentId },
    #[error("no private entry {key} for {org}")]
    PrivateNotFound { org: AgentId, key: String },
}

pub type LedgerResult<T> = Result<T, LedgerError>;

/// Genesis descriptor for a spectrum token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSpec {
    pub id: TokenId,
    pub center_freq_mhz: u32,
    pub bandwidth_mhz: u32,
    pub slot_duration: u32,
    pub location: String,
}

/// Time-limited, single-owner right to a frequency block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumToken {
    pub id: TokenId,
    pub center_freq_mhz: u32,
    pub bandwidth_mhz: u32,
    pub slot_duration: u32,
    pub location: String,
    pub capacity_mhz: u32,
    pub owner: AgentId,
    pub minted_tick: u64,
    pub expired: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub agent_id: AgentId,
    pub balance: Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Mint,
    List,
    BuyNow,
    Commit,
    Close,
    Reveal,
    Finalize,
    Settle,
    /// Standalone private-collection write.
    PrivateData,
    /// Token expiry sweep.
    Expire,
}

/// A private-collection write as recorded on the log: only the digest is
/// serialized, the plaintext never leaves the in-memory private store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateWrite {
    pub collection: AgentId,
    pub key: String,
    pub digest: String,
    #[serde(skip)]
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: u64,
    pub tick: u64,
    /// Position within its tick.
    pub seq: u64,
    pub submitter: AgentId,
    pub kind: TxKind,
    pub payload: Value,
    pub world_writes: BTreeMap<String, Value>,
    pub private_writes: Vec<PrivateWrite>,
}

/// Settled transfer of a token against currency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub tx_id: u64,
    pub tick: u64,
    pub token_id: TokenId,
    pub capacity_mhz: u32,
    pub buyer: AgentId,
    pub seller: AgentId,
    pub price: Money,
    pub mechanism: Option<Mechanism>,
    pub auction_id: Option<AuctionId>,
}

/// Sorted key/value view visible to every participant.
pub type WorldState = BTreeMap<String, Value>;

/// Selects transactions from the audit trail.
#[derive(Debug, Clone, Default)]
pub struct HistoryFilter {
    pub kind: Option<TxKind>,
    pub submitter: Option<AgentId>,
    pub from_tick: Option<u64>,
    pub to_tick: Option<u64>,
}

impl HistoryFilter {
    pub fn kind(kind: TxKind) -> Self {
        HistoryFilter { kind: Some(kind), ..Default::default() }
    }

    fn matches(&self, tx: &Transaction) -> bool {
        self.kind.is_none_or(|k| k == tx.kind)
            && self.submitter.as_ref().is_none_or(|s| *s == tx.submitter)
            && self.from_tick.is_none_or(|t| tx.tick >= t)
            && self.to_tick.is_none_or(|t| tx.tick <= t)
    }
}

pub fn account_key(agent: &AgentId) -> String {
    format!("account/{agent}")
}

pub fn token_key(token: TokenId) -> String {
    format!("token/{token}")
}

/// Staged transaction; becomes immutable once [`Ledger::append`] runs.
#[derive(Debug)]
pub struct TxDraft {
    submitter: AgentId,
    kind: TxKind,
    payload: Value,
    world_writes: BTreeMap<String, Value>,
    private_writes: Vec<PrivateWrite>,
}

impl TxDraft {
    pub fn new(submitter: AgentId, kind: TxKind, payload: Value) -> Self {
        TxDraft { submitter, kind, payload, world_writes: BTreeMap::new(), private_writes: Vec::new() }
    }

    pub fn world(mut self, key: impl Into<String>, value: Value) -> Self {
        self.world_writes.insert(key.into(), value);
        self
    }

    pub fn private(mut self, collection: AgentId, key: impl Into<String>, value: impl Into<String>) -> Self {
        let value = value.into();
        let key = key.into();
        let digest = sha256_hex(&value);
        self.world_writes.insert(key.clone(), Value::String(digest.clone()));
        self.private_writes.push(PrivateWrite { collection, key, digest, value });
        self
    }
}

type TickHook = Box<dyn FnMut(u64, &Ledger) + Send>;

/// The ledger: append-only log, world state, private collections, tokens
/// and currency accounts.
#[derive(Default)]
pub struct Ledger {
    tick: u64,
    seq_in_tick: u64,
    log: Vec<Transaction>,
    world: WorldState,
    private: BTreeMap<AgentId, BTreeMap<String, String>>,
    tokens: BTreeMap<TokenId, SpectrumToken>,
    accounts: BTreeMap<AgentId, Money>,
    tick_hook: Option<TickHook>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("tick", &self.tick)
            .field("transactions", &self.log.len())
            .field("tokens", &self.tokens.len())
            .field("accounts", &self.accounts.len())
            .finish()
    }
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Appends a staged transaction and applies its writes. This is the only
    /// path through which world or private state changes.
    pub fn append(&mut self, draft: TxDraft) -> &Transaction {
        let tx = Transaction {
            tx_id: self.log.len() as u64,
            tick: self.tick,
            seq: self.seq_in_tick,
            submitter: draft.submitter,
            kind: draft.kind,
            payload: draft.payload,
            world_writes: draft.world_writes,
            private_writes: draft.private_writes,
        };
        self.seq_in_tick += 1;
        for (k, v) in &tx.world_writes {
            self.world.insert(k.clone(), v.clone());
        }
        for w in &tx.private_writes {
            self.private.entry(w.collection.clone()).or_default().insert(w.key.clone(), w.value.clone());
        }
        self.log.push(tx);
        self.log.last().expect("just pushed")
    }

    /// Genesis currency: opens an account with an initial balance.
    pub fn open_account(&mut self, agent: AgentId, balance: Money) -> LedgerResult<()> {
        if self.accounts.contains_key(&agent) {
            return Err(LedgerError::DuplicateAccount(agent));
        }
        if balance.is_negative() {
            return Err(LedgerError::NegativeAmount(balance));
        }
        self.accounts.insert(agent.clone(), balance);
        let draft = TxDraft::new(agent.clone(), TxKind::Mint, json!({ "account": agent, "balance": balance }))
            .world(account_key(&agent), json!(balance));
        self.append(draft);
        Ok(())
    }

    pub fn mint_token(&mut self, spec: TokenSpec, owner: &AgentId) -> LedgerResult<SpectrumToken> {
        if self.tokens.contains_key(&spec.id) {
            return Err(LedgerError::DuplicateToken(spec.id));
        }
        if !self.accounts.contains_key(owner) {
            return Err(LedgerError::UnknownAgent(owner.clone()));
        }
        if spec.bandwidth_mhz == 0 {
            return Err(LedgerError::InvalidToken("bandwidth must be positive".into()));
        }
        if spec.slot_duration == 0 {
            return Err(LedgerError::InvalidToken("slot duration must be at least one tick".into()));
        }
        let token = SpectrumToken {
            id: spec.id,
            center_freq_mhz: spec.center_freq_mhz,
            bandwidth_mhz: spec.bandwidth_mhz,
            slot_duration: spec.slot_duration,
            location: spec.location,
            capacity_mhz: spec.bandwidth_mhz,
            owner: owner.clone(),
            minted_tick: self.tick,
            expired: false,
        };
        self.tokens.insert(token.id, token.clone());
        let draft = TxDraft::new(auctioneer(), TxKind::Mint, json!({ "token": token.id, "owner": owner }))
            .world(token_key(token.id), token_value(&token));
        self.append(draft);
        Ok(token)
    }

    /// Atomically transfers `token_id` to `buyer` against `price`.
    pub fn apply_settlement(
        &mut self,
        token_id: TokenId,
        buyer: &AgentId,
        seller: &AgentId,
        price: Money,
    ) -> LedgerResult<TradeRecord> {
        self.settle(token_id, buyer, seller, price, None)
    }

    /// Settlement on behalf of an auction; the trade record carries its origin.
    pub fn settle(
        &mut self,
        token_id: TokenId,
        buyer: &AgentId,
        seller: &AgentId,
        price: Money,
        origin: Option<(AuctionId, Mechanism)>,
    ) -> LedgerResult<TradeRecord> {
        if price.is_negative() {
            return Err(LedgerError::NegativeAmount(price));
        }
        let token = self.tokens.get(&token_id).ok_or(LedgerError::UnknownToken(token_id))?;
        if token.expired {
            return Err(LedgerError::Expired(token_id));
        }
        if &token.owner != seller {
            return Err(LedgerError::NotOwner { token: token_id, claimed: seller.clone(), owner: token.owner.clone() });
        }
        let buyer_balance = *self.accounts.get(buyer).ok_or_else(|| LedgerError::UnknownAgent(buyer.clone()))?;
        let seller_balance = *self.accounts.get(seller).ok_or_else(|| LedgerError::UnknownAgent(seller.clone()))?;
        if buyer_balance < price {
            return Err(LedgerError::InsufficientFunds { agent: buyer.clone(), needed: price, available: buyer_balance });
        }
        let capacity_mhz = token.capacity_mhz;

        let mut updated = token.clone();
        updated.owner = buyer.clone();
        let (new_buyer, new_seller) = if buyer == seller {
            (buyer_balance, seller_balance)
        } else {
            (buyer_balance - price, seller_balance + price)
        };
        self.accounts.insert(buyer.clone(), new_buyer);
        self.accounts.insert(seller.clone(), new_seller);
        let payload = json!({
            "token": token_id,
            "buyer": buyer,
            "seller": seller,
            "price": price,
            "auction": origin.map(|o| o.0),
            "mechanism": origin.map(|o| o.1),
        });
        let draft = TxDraft::new(auctioneer(), TxKind::Settle, payload)
            .world(token_key(token_id), token_value(&updated))
            .world(account_key(buyer), json!(new_buyer))
            .world(account_key(seller), json!(new_seller));
        self.tokens.insert(token_id, updated);
        let tx_id = self.append(draft).tx_id;
        Ok(TradeRecord {
            tx_id,
            tick: self.tick,
            token_id,
            capacity_mhz,
            buyer: buyer.clone(),
            seller: seller.clone(),
            price,
            mechanism: origin.map(|o| o.1),
            auction_id: origin.map(|o| o.0),
        })
    }

    fn check_private_access(caller: &AgentId, org: &AgentId) -> LedgerResult<()> {
        if caller == org || caller.as_str() == AUCTIONEER {
            Ok(())
        } else {
            Err(LedgerError::AccessDenied { caller: caller.clone(), org: org.clone() })
        }
    }

    /// Stores `value` in `org`'s private collection; the world state gets
    /// only the SHA-256 digest of `value` under the same key.
    pub fn put_private(&mut self, caller: &AgentId, org: &AgentId, key: &str, value: &str) -> LedgerResult<()> {
        Self::check_private_access(caller, org)?;
        if !self.accounts.contains_key(org) {
            return Err(LedgerError::UnknownAgent(org.clone()));
        }
        let draft = TxDraft::new(caller.clone(), TxKind::PrivateData, json!({ "collection": org, "key": key }))
            .private(org.clone(), key, value);
        self.append(draft);
        Ok(())
    }

    pub fn get_private(&self, caller: &AgentId, org: &AgentId, key: &str) -> LedgerResult<String> {
        Self::check_private_access(caller, org)?;
        self.private
            .get(org)
            .and_then(|c| c.get(key))
            .cloned()
            .ok_or_else(|| LedgerError::PrivateNotFound { org: org.clone(), key: key.to_string() })
    }

    /// Entire private collection of `org`, for authorized readers.
    pub fn private_collection(&self, caller: &AgentId, org: &AgentId) -> LedgerResult<BTreeMap<String, String>> {
        Self::check_private_access(caller, org)?;
        Ok(self.private.get(org).cloned().unwrap_or_default())
    }

    /// Closes the current tick and fires the tick hook with the finished state.
    pub fn advance_tick(&mut self) -> u64 {
        if let Some(mut hook) = self.tick_hook.take() {
            hook(self.tick, self);
            self.tick_hook = Some(hook);
        }
        self.tick += 1;
        self.seq_in_tick = 0;
        self.tick
    }

    pub fn set_tick_hook(&mut self, hook: impl FnMut(u64, &Ledger) + Send + 'static) {
        self.tick_hook = Some(Box::new(hook));
    }

    /// Marks tokens whose slot has elapsed as expired. Expired tokens stay
    /// with their owner but can no longer be settled.
    pub fn expire_tokens(&mut self) -> Vec<TokenId> {
        let now = self.tick;
        let due: Vec<TokenId> = self
            .tokens
            .values()
            .filter(|t| !t.expired && t.minted_tick + u64::from(t.slot_duration) <= now)
            .map(|t| t.id)
            .collect();
        for id in &due {
            let mut token = self.tokens[id].clone();
            token.expired = true;
            let draft = TxDraft::new(auctioneer(), TxKind::Expire, json!({ "token": id }))
                .world(token_key(*id), token_value(&token));
            self.tokens.insert(*id, token);
            self.append(draft);
        }
        due
    }

    pub fn history(&self, filter: &HistoryFilter) -> Vec<&Transaction> {
        self.log.iter().filter(|tx| filter.matches(tx)).collect()
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.log
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn world_get(&self, key: &str) -> Option<&Value> {
        self.world.get(key)
    }

    /// World state as it stood at the end of `tick`.
    pub fn world_at(&self, tick: u64) -> WorldState {
        replay_world(self.log.iter().take_while(|tx| tx.tick <= tick))
    }

    /// Owner of a token at the end of `tick`, read from the replayed history.
    pub fn owner_at(&self, token: TokenId, tick: u64) -> Option<AgentId> {
        let world = self.world_at(tick);
        world
            .get(&token_key(token))
            .and_then(|v| v.get("owner"))
            .and_then(|o| o.as_str())
            .map(AgentId::new)
    }

    pub fn token(&self, id: TokenId) -> Option<&SpectrumToken> {
        self.tokens.get(&id)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &SpectrumToken> {
        self.tokens.values()
    }

    pub fn balance(&self, agent: &AgentId) -> Option<Money> {
        self.accounts.get(agent).copied()
    }

    pub fn accounts(&self) -> impl Iterator<Item = Account> + '_ {
        self.accounts.iter().map(|(a, b)| Account { agent_id: a.clone(), balance: *b })
    }

    pub fn has_account(&self, agent: &AgentId) -> bool {
        self.accounts.contains_key(agent)
    }

    pub fn total_balance(&self) -> Money {
        self.accounts.values().copied().sum()
    }

    pub fn holdings(&self, agent: &AgentId) -> BTreeSet<TokenId> {
        self.tokens.values().filter(|t| &t.owner == agent).map(|t| t.id).collect()
    }

    pub fn held_capacity(&self, agent: &AgentId) -> u64 {
        self.tokens.values().filter(|t| &t.owner == agent).map(|t| u64::from(t.capacity_mhz)).sum()
    }

    /// Checks closed-economy conservation and the single-owner relation,
    /// cross-checking typed state against the world state.
    pub fn check_invariants(&self, expected_total: Money) -> Result<(), String> {
        let total = self.total_balance();
        if total != expected_total {
            return Err(format!("balance total {total} != {expected_total}"));
        }
        for (agent, bal) in &self.accounts {
            if bal.is_negative() {
                return Err(format!("{agent} has negative balance {bal}"));
            }
            if self.world.get(&account_key(agent)) != Some(&json!(bal)) {
                return Err(format!("world state balance for {agent} out of sync"));
            }
        }
        for token in self.tokens.values() {
            if !self.accounts.contains_key(&token.owner) {
                return Err(format!("{} owned by unknown {}", token.id, token.owner));
            }
            let world_owner = self.world.get(&token_key(token.id)).and_then(|v| v.get("owner")).and_then(|v| v.as_str());
            if world_owner != Some(token.owner.as_str()) {
                return Err(format!("world state owner of {} out of sync", token.id));
            }
        }
        Ok(())
    }

    /// Writes the audit trail as JSON lines.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for tx in &self.log {
            serde_json::to_writer(&mut out, tx)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Sorted key/value JSON dump of the world state.
    pub fn world_json(&self) -> String {
        serde_json::to_string(&self.world).expect("world state serializes")
    }
}

fn token_value(token: &SpectrumToken) -> Value {
    serde_json::to_value(token).expect("token serializes")
}

/// Rebuilds a world state by folding the world writes of a recorded log.
pub fn replay_world<'a>(txs: impl IntoIterator<Item = &'a Transaction>) -> WorldState {
    let mut world = WorldState::new();
    for tx in txs {
        for (k, v) in &tx.world_writes {
            world.insert(k.clone(), v.clone());
        }
    }
    world
}

/// Parses a JSON-lines transaction log.
pub fn read_jsonl(text: &str) -> Result<Vec<Transaction>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
