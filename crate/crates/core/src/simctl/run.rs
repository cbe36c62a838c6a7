//! The tick-driven simulation loop.

use std::collections::BTreeMap;
use std::time::Duration;

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{AgentConfig, ConfigError, Role, ScenarioConfig, Strategy};
use crate::agents::{
    act, due_reveals, perceive, plan, Action, AgentState, Assessment, BidResult, DefaultBrain, ExternalBrain, HeuristicBrain, Intent,
    MarketView, PendingBid, PlanOutcome, PlanSource, Planner, PlanningContext,
};
use crate::auctionhouse::{private_bid_key, AuctionError, AuctionHouse, BoardEntry, Outcome, Phase};
use crate::economics::{BidHistory, PricingPolicy};
use crate::ids::{AgentId, AuctionId, Mechanism, TokenId};
use crate::ledger::{bid_preimage, Ledger, LedgerError, TokenSpec, TradeRecord, Transaction, WorldState};
use crate::metrics::{
    coalition_value, shapley_benchmark, snapshot, AgentNeed, MetricsSnapshot, Player, SurplusTracker, WelfareAccount,
};
use crate::money::{int, to_f64, Money, Rational};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("genesis failed: {0}")]
    Genesis(#[from] LedgerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Plan,
    Fallback,
    Action,
    Rejected,
    Failed,
}

/// Agent-level log line; agent errors are recorded here and never abort a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub tick: u64,
    pub agent: AgentId,
    pub kind: EventKind,
    pub detail: String,
}

/// World state captured while sealed bids were outstanding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub tick: u64,
    /// Open sealed auctions holding at least one commit.
    pub auctions: Vec<AuctionId>,
    pub world: WorldState,
}

/// Plaintext of a committed bid, as held in the bidder's private store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateBid {
    pub tick: u64,
    pub auction: AuctionId,
    pub bidder: AgentId,
    pub value: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListingRecord {
    pub auction: AuctionId,
    pub token: TokenId,
    pub capacity_mhz: u32,
    pub seller: AgentId,
    pub mechanism: Mechanism,
    pub reserve: Money,
    pub opened_tick: u64,
    pub ended_tick: Option<u64>,
    pub winner: Option<AgentId>,
    pub price: Option<Money>,
    /// Revealed sealed bids (public once revealed).
    pub revealed: Vec<(AgentId, Money)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub mechanism: Mechanism,
    pub seed: u64,
    pub ticks: u64,
    pub trades: usize,
    pub traded_mhz: u64,
    /// Total paid over total MHz traded.
    pub avg_usd_per_mhz: f64,
    pub surplus: f64,
    pub shapley: f64,
    pub efficiency: f64,
    pub gini: f64,
    pub hhi: f64,
    pub buyer_profit: f64,
    pub seller_profit: f64,
    /// Sum over trades of the buyer's valuation of the block.
    pub buyer_value: f64,
    pub optimal_welfare: f64,
    pub realized_welfare: f64,
    pub price_of_anarchy: String,
    pub residual_gap_mhz: u64,
    pub invariant_violations: usize,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: ScenarioConfig,
    pub summary: Summary,
    pub transactions: Vec<Transaction>,
    pub trades: Vec<TradeRecord>,
    pub metrics: Vec<MetricsSnapshot>,
    pub listings: Vec<ListingRecord>,
    pub events: Vec<AgentEvent>,
    pub world_snapshots: Vec<WorldSnapshot>,
    pub private_bids: Vec<PrivateBid>,
    pub invariant_violations: Vec<String>,
    pub shapley_per_agent: Vec<(AgentId, f64)>,
    pub welfare: WelfareAccount,
}

struct AgentRuntime {
    cfg: AgentConfig,
    id: AgentId,
    utility: Rational,
    brain: Box<dyn Planner>,
    pending: BTreeMap<AuctionId, PendingBid>,
    results: Vec<BidResult>,
    last_reserve: BTreeMap<TokenId, Rational>,
}

impl AgentRuntime {
    fn valuation(&self, capacity_mhz: u32) -> Rational {
        &self.utility * int(i64::from(capacity_mhz))
    }
}

pub struct Simulation {
    config: ScenarioConfig,
    policy: PricingPolicy,
    grid_fraction: Rational,
    ledger: Ledger,
    house: AuctionHouse,
    agents: Vec<AgentRuntime>,
    rng: ChaCha8Rng,
    history: BidHistory,
    surplus: SurplusTracker,
    welfare: WelfareAccount,
    shapley_total: Rational,
    shapley_per_agent: Vec<(AgentId, f64)>,
    genesis_total: Money,
    genesis_owner: BTreeMap<TokenId, AgentId>,
    trades: Vec<TradeRecord>,
    buyer_value: Rational,
    metrics: Vec<MetricsSnapshot>,
    events: Vec<AgentEvent>,
    world_snapshots: Vec<WorldSnapshot>,
    private_bids: Vec<PrivateBid>,
    violations: Vec<String>,
    ticks_run: u64,
}

impl Simulation {
    /// Genesis: accounts, token minting (round-robin across sellers) and the tick-0 snapshot.
    pub fn new(config: &ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let policy = config.pricing_policy()?;
        let grid_fraction = config.grid_fraction()?;
        let mut ledger = Ledger::new();
        let timeout = Duration::from_secs(config.brain.timeout_secs);
        let mut agents = Vec::new();
        for a in &config.agents {
            let id = AgentId::new(&a.id);
            ledger.open_account(id.clone(), a.balance())?;
            let brain: Box<dyn Planner> = match (config.strategy_of(a), &config.brain.endpoint) {
                (Strategy::Heuristic, _) => Box::new(HeuristicBrain),
                (Strategy::Pipeline, Some(url)) => Box::new(ExternalBrain::new(url.clone()).with_timeout(timeout)),
                (Strategy::Pipeline, None) => Box::new(DefaultBrain),
            };
            agents.push(AgentRuntime {
                cfg: a.clone(),
                id,
                utility: a.utility(),
                brain,
                pending: BTreeMap::new(),
                results: Vec::new(),
                last_reserve: BTreeMap::new(),
            });
        }
        let sellers: Vec<AgentId> = agents.iter().filter(|a| a.cfg.role == Role::Seller).map(|a| a.id.clone()).collect();
        let mut genesis_owner = BTreeMap::new();
        let t = &config.tokens;
        for k in 0..t.count {
            let owner = &sellers[k as usize % sellers.len()];
            let spec = TokenSpec {
                id: TokenId(k + 1),
                center_freq_mhz: t.center_freq_mhz,
                bandwidth_mhz: t.capacity_mhz,
                slot_duration: t.slot_duration,
                location: t.location.clone(),
            };
            let token = ledger.mint_token(spec, owner)?;
            genesis_owner.insert(token.id, owner.clone());
        }

        let players: Vec<Player> = agents
            .iter()
            .map(|a| Player { id: a.id.clone(), utility_per_mhz: a.utility.clone(), is_seller: a.cfg.role == Role::Seller })
            .collect();
        let total_capacity = int(i64::from(t.count) * i64::from(t.capacity_mhz));
        let (shapley_total, shapley_per_agent) = match shapley_benchmark(&players, &total_capacity) {
            Ok(b) => (b.total, b.per_agent.iter().map(|(id, v)| (id.clone(), to_f64(v))).collect()),
            Err(e) => {
                log::info!("per-agent Shapley values skipped: {e}");
                let all = if players.len() >= 32 { u32::MAX } else { (1u32 << players.len()) - 1 };
                let grand = if players.len() >= 32 {
                    let best = players.iter().map(|p| p.utility_per_mhz.clone()).max().unwrap_or_else(Rational::zero);
                    &total_capacity * best
                } else {
                    coalition_value(&players, all, &total_capacity)
                };
                (grand, Vec::new())
            }
        };

        let genesis_total = ledger.total_balance();
        let mut sim = Simulation {
            config: config.clone(),
            policy,
            grid_fraction,
            ledger,
            house: AuctionHouse::new(),
            agents,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            history: BidHistory::new(config.bid_history_window),
            surplus: SurplusTracker::new(),
            welfare: WelfareAccount::default(),
            shapley_total,
            shapley_per_agent,
            genesis_total,
            genesis_owner,
            trades: Vec::new(),
            buyer_value: Rational::zero(),
            metrics: Vec::new(),
            events: Vec::new(),
            world_snapshots: Vec::new(),
            private_bids: Vec::new(),
            violations: Vec::new(),
            ticks_run: 0,
        };
        sim.record_metrics();
        sim.check_invariants();
        sim.ledger.advance_tick();
        Ok(sim)
    }

    /// Fault injection: commits also write their plaintext to the world state.
    pub fn set_leak_plaintext_commits(&mut self, leak: bool) {
        self.house.set_leak_plaintext_commits(leak);
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn house(&self) -> &AuctionHouse {
        &self.house
    }

    pub fn tick(&self) -> u64 {
        self.ledger.tick()
    }

    fn num_buyers(&self) -> u32 {
        let n = self.agents.iter().filter(|a| a.cfg.role == Role::Buyer).count();
        u32::try_from(n).unwrap_or(u32::MAX)
    }

    fn agent_state(&self, i: usize) -> AgentState {
        let a = &self.agents[i];
        let holdings = self
            .ledger
            .holdings(&a.id)
            .into_iter()
            .filter_map(|t| self.ledger.token(t).filter(|tok| !tok.expired).map(|tok| (t, tok.capacity_mhz)))
            .collect();
        AgentState {
            agent_id: a.id.clone(),
            balance: self.ledger.balance(&a.id).unwrap_or(Money::ZERO),
            utility_per_mhz: a.utility.clone(),
            need_mhz: a.cfg.need_at(self.ledger.tick()),
            holdings,
        }
    }

    fn market_view(&self, i: usize, board: &[BoardEntry]) -> MarketView {
        let a = &self.agents[i];
        MarketView {
            tick: self.ledger.tick(),
            mechanism: self.config.mechanism,
            open_auctions: board.to_vec(),
            recent_winning_bids: self.history.clone(),
            num_buyers: self.num_buyers(),
            own_pending: a.pending.values().cloned().collect(),
            own_results: a.results.clone(),
            own_last_reserve: a.last_reserve.clone(),
            max_concurrent_listings: self.config.max_concurrent_listings,
        }
    }

    fn log_event(&mut self, i: usize, kind: EventKind, detail: String) {
        let tick = self.ledger.tick();
        match kind {
            EventKind::Rejected | EventKind::Failed | EventKind::Fallback => log::debug!("tick {tick} {}: {detail}", self.agents[i].id),
            _ => log::trace!("tick {tick} {}: {detail}", self.agents[i].id),
        }
        self.events.push(AgentEvent { tick, agent: self.agents[i].id.clone(), kind, detail });
    }

    fn plan_all(&self, board: &[BoardEntry]) -> Vec<(Assessment, PlanOutcome)> {
        let inputs: Vec<(AgentState, MarketView)> = (0..self.agents.len()).map(|i| (self.agent_state(i), self.market_view(i, board))).collect();
        let brains: Vec<&dyn Planner> = self.agents.iter().map(|a| a.brain.as_ref()).collect();
        let (inputs, brains, policy, grid) = (&inputs, &brains, &self.policy, &self.grid_fraction);
        let plan_one = |i: usize| {
            let (state, view) = &inputs[i];
            let assessment = perceive(view, state);
            let ctx = PlanningContext { assessment: &assessment, state, view, policy, grid_fraction: grid };
            let outcome = plan(&ctx, brains[i]);
            (assessment, outcome)
        };
        if self.config.brain.endpoint.is_some() {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..self.agents.len()).map(|i| s.spawn(move || plan_one(i))).collect();
                handles.into_iter().map(|h| h.join().expect("planner thread panicked")).collect()
            })
        } else {
            (0..self.agents.len()).map(plan_one).collect()
        }
    }

    /// Runs one tick: plan on the start-of-tick snapshot, act in a seeded
    /// permutation, advance auction phases, then record metrics.
    pub fn step(&mut self) {
        let board = self.house.board();
        let plans = self.plan_all(&board);
        for (i, (assessment, outcome)) in plans.iter().enumerate() {
            let kind = if outcome.source == PlanSource::Fallback { EventKind::Fallback } else { EventKind::Plan };
            let mut detail = format!(
                "{} [{:?}/{:?}, win rate {:.2}] {}",
                describe_intent(&outcome.intent),
                assessment.market_structure,
                assessment.demand_trend,
                assessment.win_rate,
                assessment.risk_note
            );
            if let Some(note) = &outcome.note {
                detail.push_str(&format!(" (fallback: {note})"));
            }
            self.log_event(i, kind, detail);
        }

        let mut order: Vec<usize> = (0..self.agents.len()).collect();
        order.shuffle(&mut self.rng);
        for i in order {
            let board = self.house.board();
            let view = self.market_view(i, &board);
            for reveal in due_reveals(&view) {
                self.execute(i, reveal, None);
            }
            let intent = &plans[i].1.intent;
            let board = self.house.board();
            let state = self.agent_state(i);
            let view = self.market_view(i, &board);
            match act(intent, &state, &view, &mut self.rng) {
                Ok(actions) => {
                    for action in actions {
                        self.execute(i, action, Some(intent));
                    }
                }
                Err(rejection) => self.log_event(i, EventKind::Rejected, rejection.to_string()),
            }
        }

        self.capture_world_snapshot();
        self.advance_auctions();
        if self.config.tokens.expire {
            for token in self.ledger.expire_tokens() {
                log::debug!("{token} expired");
            }
        }
        self.record_metrics();
        self.check_invariants();
        self.ticks_run += 1;
        self.ledger.advance_tick();
    }

    fn execute(&mut self, i: usize, action: Action, intent: Option<&Intent>) {
        let id = self.agents[i].id.clone();
        let result: Result<String, AuctionError> = match action {
            Action::StartAuction { token, mechanism, reserve } | Action::Relist { token, mechanism, reserve } => {
                match self.house.create_listing(&mut self.ledger, token, &id, mechanism, reserve) {
                    Ok(a) => {
                        let aid = a.id;
                        let exact = match intent {
                            Some(Intent::Sell { reserve: r, .. }) => r.clone(),
                            _ => reserve.to_rational(),
                        };
                        self.agents[i].last_reserve.insert(token, exact);
                        Ok(format!("listed {token} as {aid} ({mechanism}) at {reserve}"))
                    }
                    Err(e) => Err(e),
                }
            }
            Action::PlaceBid { auction, digest, value, salt } => {
                match self.house.commit_with_plaintext(&mut self.ledger, auction, &id, &digest, value) {
                    Ok(()) => {
                        let key = private_bid_key(auction, &id);
                        if let Err(e) = self.ledger.put_private(&id, &id, &key, &bid_preimage(&salt, value)) {
                            log::warn!("{id}: private bid store failed: {e}");
                        }
                        let capacity_mhz = self.house.auction(auction).map_or(0, |a| a.capacity_mhz);
                        self.agents[i].pending.insert(auction, PendingBid { auction, value, capacity_mhz, salt });
                        self.private_bids.push(PrivateBid { tick: self.ledger.tick(), auction, bidder: id.clone(), value });
                        Ok(format!("committed to {auction}"))
                    }
                    Err(e) => Err(e),
                }
            }
            Action::Reveal { auction, value, salt } => {
                self.house.reveal_bid(&mut self.ledger, auction, &id, &salt, value).map(|()| format!("revealed in {auction}"))
            }
            Action::BuyNow { auction, price } => match self.house.buy_now(&mut self.ledger, auction, &id) {
                Ok(outcome) => {
                    self.on_direct_sale_end(auction, &outcome);
                    Ok(format!("bought {auction} at {price}"))
                }
                Err(e) => Err(e),
            },
        };
        match result {
            Ok(detail) => self.log_event(i, EventKind::Action, detail),
            Err(e) => self.log_event(i, EventKind::Failed, e.to_string()),
        }
    }

    fn capture_world_snapshot(&mut self) {
        let auctions: Vec<AuctionId> = self
            .house
            .auctions()
            .filter(|a| a.mechanism.is_sealed() && a.phase == Phase::Open && !a.commits.is_empty())
            .map(|a| a.id)
            .collect();
        if !auctions.is_empty() {
            self.world_snapshots.push(WorldSnapshot { tick: self.ledger.tick(), auctions, world: self.ledger.world().clone() });
        }
    }

    /// Closes sealed auctions after their bidding tick, finalizes them after
    /// their reveal tick, and expires direct-sale listings left unsold.
    fn advance_auctions(&mut self) {
        let tick = self.ledger.tick();
        for entry in self.house.board() {
            let Some(a) = self.house.auction(entry.id) else { continue };
            let (id, mechanism, phase, opened, closed) = (a.id, a.mechanism, a.phase, a.opened_tick, a.closed_tick);
            match (mechanism.is_sealed(), phase) {
                (false, Phase::Open) if opened < tick => match self.house.finalize(&mut self.ledger, id) {
                    Ok(outcome) => self.on_direct_sale_end(id, &outcome),
                    Err(e) => log::error!("{id}: expiry failed: {e}"),
                },
                (true, Phase::Open) if opened < tick => {
                    if let Err(e) = self.house.close_bidding(&mut self.ledger, id) {
                        log::error!("{id}: close failed: {e}");
                    }
                }
                (true, Phase::Revealing) if closed.is_some_and(|c| c < tick) => match self.house.finalize(&mut self.ledger, id) {
                    Ok(outcome) => self.on_sealed_end(id, &outcome),
                    Err(e) => log::error!("{id}: finalize failed: {e}"),
                },
                _ => {}
            }
        }
    }

    fn agent_index(&self, id: &AgentId) -> Option<usize> {
        self.agents.iter().position(|a| &a.id == id)
    }

    fn record_trade(&mut self, trade: &TradeRecord) {
        let buyer = self.agent_index(&trade.buyer).map(|i| self.agents[i].utility.clone()).unwrap_or_else(Rational::zero);
        let seller = self.agent_index(&trade.seller).map(|i| self.agents[i].utility.clone()).unwrap_or_else(Rational::zero);
        if let Err(e) = self.surplus.record_trade(trade, &buyer, &seller) {
            log::error!("trade {} not recorded: {e}", trade.tx_id);
        }
        self.buyer_value += &buyer * int(i64::from(trade.capacity_mhz));
        self.trades.push(trade.clone());
    }

    fn on_sealed_end(&mut self, id: AuctionId, outcome: &Outcome) {
        let Some(a) = self.house.auction(id) else { return };
        let capacity = a.capacity_mhz;
        let seller = a.seller.clone();
        let reveals: Vec<(AgentId, Money)> = a.reveals.iter().map(|(w, r)| (w.clone(), r.value)).collect();
        let committers: Vec<AgentId> = a.commits.keys().cloned().collect();

        for who in &committers {
            if let Some(i) = self.agent_index(who) {
                self.agents[i].pending.remove(&id);
                let won = outcome.winner.as_ref() == Some(who);
                let price = if won { outcome.clearing_price } else { None };
                self.agents[i].results.push(BidResult { auction: id, won, price, capacity_mhz: capacity });
            }
        }
        if let Some(trade) = &outcome.trade {
            self.record_trade(trade);
            if let Some((_, v)) = reveals.iter().find(|(w, _)| Some(w) == outcome.winner.as_ref()) {
                self.history.push(v.to_rational());
            }
        }
        if !reveals.is_empty() {
            let vs = self.agent_index(&seller).map(|i| self.agents[i].valuation(capacity)).unwrap_or_else(Rational::zero);
            let best = reveals.iter().filter_map(|(w, _)| self.agent_index(w)).map(|i| self.agents[i].valuation(capacity)).max();
            let winner = outcome.winner.as_ref().and_then(|w| self.agent_index(w)).map(|i| self.agents[i].valuation(capacity));
            self.welfare.record(&vs, best.as_ref(), winner.as_ref());
        }
    }

    /// Welfare for a direct sale compares the actual buyer against every
    /// agent with unmet demand when the listing ends.
    fn on_direct_sale_end(&mut self, id: AuctionId, outcome: &Outcome) {
        let Some(a) = self.house.auction(id) else { return };
        let capacity = a.capacity_mhz;
        let seller = a.seller.clone();
        let winner = outcome.winner.clone();
        if let Some(trade) = &outcome.trade {
            self.record_trade(trade);
            self.history.push(trade.price.to_rational());
            if let Some(i) = self.agent_index(&trade.buyer) {
                self.agents[i].results.push(BidResult { auction: id, won: true, price: Some(trade.price), capacity_mhz: capacity });
            }
        }
        let vs = self.agent_index(&seller).map(|i| self.agents[i].valuation(capacity)).unwrap_or_else(Rational::zero);
        let interested = (0..self.agents.len()).filter(|&i| {
            self.agents[i].id != seller && (winner.as_ref() == Some(&self.agents[i].id) || crate::agents::demand_gap(&self.agent_state(i)) > 0)
        });
        let best = interested.map(|i| self.agents[i].valuation(capacity)).max();
        let won = winner.as_ref().and_then(|w| self.agent_index(w)).map(|i| self.agents[i].valuation(capacity));
        if best.is_some() {
            self.welfare.record(&vs, best.as_ref(), won.as_ref());
        }
    }

    fn needs(&self) -> Vec<AgentNeed> {
        let tick = self.ledger.tick();
        self.agents.iter().map(|a| AgentNeed { id: a.id.clone(), need_mhz: a.cfg.need_at(tick) }).collect()
    }

    fn record_metrics(&mut self) {
        let snap = snapshot(self.ledger.tick(), &self.ledger, &self.needs(), self.surplus.cumulative(), &self.shapley_total);
        self.metrics.push(snap);
    }

    /// Conservation plus an independent replay of token ownership from the
    /// trade log: no token may be sold by anyone but its current owner.
    fn check_invariants(&mut self) {
        let tick = self.ledger.tick();
        if let Err(e) = self.ledger.check_invariants(self.genesis_total) {
            self.violations.push(format!("tick {tick}: {e}"));
        }
        let mut owner = self.genesis_owner.clone();
        for t in &self.trades {
            match owner.get_mut(&t.token_id) {
                Some(o) if *o == t.seller => *o = t.buyer.clone(),
                _ => self.violations.push(format!("tick {tick}: {} sold by non-owner {}", t.token_id, t.seller)),
            }
        }
        for (token, expected) in &owner {
            let actual = self.ledger.token(*token).map(|t| &t.owner);
            if actual != Some(expected) {
                self.violations.push(format!("tick {tick}: {token} owner mismatch"));
            }
        }
        let sold = owner.iter().filter(|(t, o)| self.genesis_owner.get(t) != Some(o)).count();
        let residual = owner.iter().filter(|(t, o)| self.genesis_owner.get(t) == Some(o)).count();
        if sold + residual != self.genesis_owner.len() || self.ledger.tokens().count() != self.genesis_owner.len() {
            self.violations.push(format!("tick {tick}: sold {sold} + residual {residual} != minted {}", self.genesis_owner.len()));
        }
    }

    fn listings(&self) -> Vec<ListingRecord> {
        self.house
            .auctions()
            .map(|a| ListingRecord {
                auction: a.id,
                token: a.token_id,
                capacity_mhz: a.capacity_mhz,
                seller: a.seller.clone(),
                mechanism: a.mechanism,
                reserve: a.reserve,
                opened_tick: a.opened_tick,
                ended_tick: a.ended_tick,
                winner: a.outcome.as_ref().and_then(|o| o.winner.clone()),
                price: a.outcome.as_ref().and_then(|o| o.clearing_price),
                revealed: a.reveals.iter().map(|(w, r)| (w.clone(), r.value)).collect(),
            })
            .collect()
    }

    pub fn finish(self) -> RunArtifacts {
        let last = self.metrics.last().cloned();
        let traded_mhz: u64 = self.trades.iter().map(|t| u64::from(t.capacity_mhz)).sum();
        let paid: Money = self.trades.iter().map(|t| t.price).sum();
        let avg = if traded_mhz == 0 { 0.0 } else { paid.as_units_f64() / traded_mhz as f64 };
        let summary = Summary {
            scenario: self.config.name.clone(),
            mechanism: self.config.mechanism,
            seed: self.config.seed,
            ticks: self.ticks_run,
            trades: self.trades.len(),
            traded_mhz,
            avg_usd_per_mhz: avg,
            surplus: to_f64(self.surplus.cumulative()),
            shapley: to_f64(&self.shapley_total),
            efficiency: last.as_ref().map_or(0.0, |m| m.efficiency),
            gini: last.as_ref().map_or(0.0, |m| m.gini),
            hhi: last.as_ref().map_or(0.0, |m| m.hhi),
            buyer_profit: to_f64(self.surplus.buyer_profit()),
            seller_profit: to_f64(self.surplus.seller_profit()),
            buyer_value: to_f64(&self.buyer_value),
            optimal_welfare: to_f64(&self.welfare.optimal),
            realized_welfare: to_f64(&self.welfare.realized),
            price_of_anarchy: self.welfare.price_of_anarchy().to_string(),
            residual_gap_mhz: last.as_ref().map_or(0, |m| m.residual_gap_mhz),
            invariant_violations: self.violations.len(),
        };
        let listings = self.listings();
        RunArtifacts {
            summary,
            transactions: self.ledger.transactions().to_vec(),
            listings,
            config: self.config,
            trades: self.trades,
            metrics: self.metrics,
            events: self.events,
            world_snapshots: self.world_snapshots,
            private_bids: self.private_bids,
            invariant_violations: self.violations,
            shapley_per_agent: self.shapley_per_agent,
            welfare: self.welfare,
        }
    }
}

fn describe_intent(intent: &Intent) -> String {
    match intent {
        Intent::Idle => "idle".into(),
        Intent::Buy { auction, .. } => format!("buy {auction}"),
        Intent::Sell { token, mechanism, reserve } => format!("sell {token} via {mechanism} at {}", Money::ceil_from(reserve)),
    }
}

/// Runs `config` for its configured number of ticks under `seed`.
pub fn run(config: &ScenarioConfig, seed: u64) -> Result<RunArtifacts, SimError> {
    run_with(config, seed, false)
}

/// As [`run`], optionally with the plaintext-commit fault injected.
pub fn run_with(config: &ScenarioConfig, seed: u64, leak_plaintext_commits: bool) -> Result<RunArtifacts, SimError> {
    let mut cfg = config.clone();
    cfg.seed = seed;
    let mut sim = Simulation::new(&cfg)?;
    sim.set_leak_plaintext_commits(leak_plaintext_commits);
    for _ in 0..cfg.num_ticks {
        sim.step();
    }
    Ok(sim.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simctl::config::{scenario1, scenario2};

    #[test]
    fn genesis_snapshot_is_fully_concentrated() {
        let sim = Simulation::new(&scenario1()).unwrap();
        let m = &sim.metrics[0];
        assert_eq!(m.tick, 0);
        assert_eq!(m.hhi, 1.0);
        assert_eq!(m.gini, 0.0);
        assert_eq!(m.residual_gap_mhz, 300);
        assert_eq!(to_f64(&sim.shapley_total), 5000.0);
    }

    #[test]
    fn zero_buyers_means_zero_trades() {
        let mut cfg = scenario1();
        cfg.agents.retain(|a| a.role == Role::Seller);
        cfg.num_ticks = 10;
        let out = run(&cfg, 1).unwrap();
        assert_eq!(out.summary.trades, 0);
        assert_eq!(out.summary.efficiency, 0.0);
        assert!(out.invariant_violations.is_empty());
    }

    #[test]
    fn heuristic_direct_sale_sells_everything_in_scenario2() {
        let cfg = scenario2().with_strategy(Strategy::Heuristic);
        let mut cfg = cfg;
        cfg.mechanism = Mechanism::DirectSale;
        let out = run(&cfg, 3).unwrap();
        assert_eq!(out.summary.trades, 25);
        assert!(out.invariant_violations.is_empty(), "{:?}", out.invariant_violations);
    }

    #[test]
    fn sealed_auction_timeline() {
        let mut cfg = scenario2();
        cfg.num_ticks = 3;
        let out = run(&cfg, 5).unwrap();
        let first = &out.listings[0];
        assert_eq!(first.opened_tick, 1);
        assert_eq!(first.ended_tick, Some(3));
        assert_eq!(first.revealed.len(), 3);
        assert_eq!(out.trades[0].tick, 3);
    }

    #[test]
    fn same_seed_same_transactions() {
        let a = run(&scenario1(), 11).unwrap();
        let b = run(&scenario1(), 11).unwrap();
        assert_eq!(a.transactions, b.transactions);
    }
}
