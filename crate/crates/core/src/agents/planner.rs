//! Planning stage: brains and the validation wrapper around them.

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::heuristic::heuristic_decide;
use super::{available_balance, effective_gap, sellable_token, surplus_capacity, AgentState, Assessment, Intent, MarketView};
use crate::auctionhouse::{BoardEntry, Phase};
use crate::economics::{bne_shade_bid, decay_reserve, initial_reserve, optimize_first_price_bid, PricingPolicy};
use crate::ids::Mechanism;
use crate::money::{Money, Rational};

/// Everything a brain may look at when planning.
#[derive(Debug, Clone)]
pub struct PlanningContext<'a> {
    pub assessment: &'a Assessment,
    pub state: &'a AgentState,
    pub view: &'a MarketView,
    pub policy: &'a PricingPolicy,
    /// First-price search grid step as a fraction of the valuation.
    pub grid_fraction: &'a Rational,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BrainError {
    #[error("brain timed out: {0}")]
    Timeout(String),
    #[error("brain transport failure: {0}")]
    Transport(String),
    #[error("malformed brain output: {0}")]
    Malformed(String),
    #[error("brain output missing `{0}`")]
    MissingField(&'static str),
    #[error("brain output refers to {0}")]
    Infeasible(String),
}

pub trait Planner: Send + Sync {
    fn name(&self) -> &str;
    fn plan(&self, ctx: &PlanningContext<'_>) -> Result<Intent, BrainError>;
}

/// Deterministic game-theoretic brain.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultBrain;

impl Planner for DefaultBrain {
    fn name(&self) -> &str {
        "default"
    }

    fn plan(&self, ctx: &PlanningContext<'_>) -> Result<Intent, BrainError> {
        Ok(default_intent(ctx))
    }
}

/// The rule-based baseline packaged as a brain.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicBrain;

impl Planner for HeuristicBrain {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn plan(&self, ctx: &PlanningContext<'_>) -> Result<Intent, BrainError> {
        Ok(heuristic_decide(ctx.state, ctx.view, ctx.view.mechanism, ctx.policy.decay()))
    }
}

fn open_targets<'a>(ctx: &'a PlanningContext<'a>) -> impl Iterator<Item = &'a BoardEntry> {
    let (state, view) = (ctx.state, ctx.view);
    view.open_auctions
        .iter()
        .filter(move |a| a.phase == Phase::Open && a.mechanism == view.mechanism && a.seller != state.agent_id && !view.has_pending(a.id))
}

pub fn default_intent(ctx: &PlanningContext<'_>) -> Intent {
    let (state, view) = (ctx.state, ctx.view);
    if surplus_capacity(state) > 0 {
        if let Some((token, capacity)) = sellable_token(state, view) {
            let vs = state.valuation(capacity);
            let reserve = match view.own_last_reserve.get(&token) {
                Some(prev) if view.mechanism == Mechanism::DirectSale => decay_reserve(prev, &vs, ctx.policy),
                Some(prev) => prev.clone(),
                None => initial_reserve(&vs, ctx.policy),
            };
            return Intent::Sell { token, mechanism: view.mechanism, reserve };
        }
    }
    if effective_gap(state, view) == 0 {
        return Intent::Idle;
    }
    let budget = available_balance(state, view).to_rational();
    match view.mechanism {
        Mechanism::DirectSale => {
            let mut best: Option<(&BoardEntry, Rational)> = None;
            for a in open_targets(ctx) {
                let v = state.valuation(a.capacity_mhz);
                let ask = a.reserve.to_rational();
                if ask > v || ask > budget {
                    continue;
                }
                let gain = &v - &ask;
                if best.as_ref().is_none_or(|(_, g)| gain > *g) {
                    best = Some((a, gain));
                }
            }
            best.map_or(Intent::Idle, |(a, _)| Intent::Buy { auction: a.id, value: state.valuation(a.capacity_mhz) })
        }
        Mechanism::FirstPrice | Mechanism::SecondPrice => {
            for a in open_targets(ctx) {
                let v = state.valuation(a.capacity_mhz);
                if !v.is_positive() {
                    continue;
                }
                let raw = if view.mechanism == Mechanism::FirstPrice {
                    let step = &v * ctx.grid_fraction;
                    let n = view.num_buyers.max(1);
                    match optimize_first_price_bid(&v, &view.recent_winning_bids, &step, n) {
                        // history says no bid below v can win: probe at the equilibrium shade
                        Ok(choice) if choice.expected_surplus.as_ref().is_some_and(Zero::is_zero) => match bne_shade_bid(&v, n) {
                            Ok(b) => b,
                            Err(_) => continue,
                        },
                        Ok(choice) => choice.bid,
                        Err(_) => continue,
                    }
                } else {
                    v
                };
                let bid = raw.min(budget.clone());
                if bid.is_zero() || Money::floor_from(&bid) < a.reserve {
                    continue;
                }
                return Intent::Buy { auction: a.id, value: bid };
            }
            Intent::Idle
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    Brain,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub intent: Intent,
    pub source: PlanSource,
    /// Why the fallback was taken, if it was.
    pub note: Option<String>,
}

/// Bounds a brain's intent: buy targets must be open foreign listings and
/// bids are clamped to `[0, min(V, available balance)]`; reserves are
/// clamped at zero.
pub fn validate(ctx: &PlanningContext<'_>, intent: Intent) -> Result<Intent, BrainError> {
    match intent {
        Intent::Idle => Ok(Intent::Idle),
        Intent::Buy { auction, value } => {
            let entry = ctx
                .view
                .auction(auction)
                .filter(|a| a.phase == Phase::Open && a.seller != ctx.state.agent_id)
                .ok_or_else(|| BrainError::Infeasible(format!("{auction} which is not an open foreign listing")))?;
            let v = ctx.state.valuation(entry.capacity_mhz);
            let cap = v.min(available_balance(ctx.state, ctx.view).to_rational());
            let value = if value.is_negative() { Rational::zero() } else { value.min(cap) };
            Ok(Intent::Buy { auction, value })
        }
        Intent::Sell { token, mechanism, reserve } => {
            let reserve = if reserve.is_negative() { Rational::zero() } else { reserve };
            Ok(Intent::Sell { token, mechanism, reserve })
        }
    }
}

/// Runs `brain`, validates its output and falls back to the default brain on
/// any error.
pub fn plan(ctx: &PlanningContext<'_>, brain: &dyn Planner) -> PlanOutcome {
    match brain.plan(ctx).and_then(|i| validate(ctx, i)) {
        Ok(intent) => PlanOutcome { intent, source: PlanSource::Brain, note: None },
        Err(e) => {
            log::warn!("{}: brain `{}` failed ({e}); using default brain", ctx.state.agent_id, brain.name());
            let intent = validate(ctx, default_intent(ctx)).unwrap_or(Intent::Idle);
            PlanOutcome { intent, source: PlanSource::Fallback, note: Some(e.to_string()) }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::perceive;
    use crate::agents::testutil::*;
    use crate::economics::BidHistory;
    use crate::ids::{AuctionId, TokenId};
    use crate::money::{int, ratio};

    fn policy() -> PricingPolicy {
        PricingPolicy::new(ratio(115, 100), ratio(1, 10)).unwrap()
    }

    fn run(brain: &dyn Planner, s: &AgentState, v: &MarketView) -> PlanOutcome {
        let a = perceive(v, s);
        let p = policy();
        let step = ratio(1, 100);
        plan(&PlanningContext { assessment: &a, state: s, view: v, policy: &p, grid_fraction: &step }, brain)
    }

    struct Fixed(Result<Intent, BrainError>);

    impl Planner for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn plan(&self, _: &PlanningContext<'_>) -> Result<Intent, BrainError> {
            self.0.clone()
        }
    }

    #[test]
    fn second_price_bids_truthfully() {
        let s = state(15, 100, &[], 5000);
        let v = view(Mechanism::SecondPrice, vec![entry(4, 1, Mechanism::SecondPrice, 52, Phase::Open)]);
        assert_eq!(run(&DefaultBrain, &s, &v).intent, Intent::Buy { auction: AuctionId(4), value: int(150) });
    }

    #[test]
    fn first_price_uses_equilibrium_without_history() {
        let s = state(20, 100, &[], 5000);
        let v = view(Mechanism::FirstPrice, vec![entry(4, 1, Mechanism::FirstPrice, 55, Phase::Open)]);
        assert_eq!(run(&DefaultBrain, &s, &v).intent, Intent::Buy { auction: AuctionId(4), value: ratio(400, 3) });
    }

    #[test]
    fn first_price_uses_empirical_cdf_with_history() {
        let s = state(20, 100, &[], 5000);
        let mut v = view(Mechanism::FirstPrice, vec![entry(4, 1, Mechanism::FirstPrice, 55, Phase::Open)]);
        v.recent_winning_bids = BidHistory::from_bids(20, [int(100), int(120), int(140)]);
        // F(b) jumps just above each recorded bid; (200-b)·F(b) peaks at 142
        assert_eq!(run(&DefaultBrain, &s, &v).intent, Intent::Buy { auction: AuctionId(4), value: int(142) });
    }

    #[test]
    fn first_price_probes_when_history_is_out_of_reach() {
        let s = state(10, 100, &[], 5000);
        let mut v = view(Mechanism::FirstPrice, vec![entry(4, 1, Mechanism::FirstPrice, 55, Phase::Open)]);
        v.recent_winning_bids = BidHistory::from_bids(20, [int(140), int(142)]);
        assert_eq!(run(&DefaultBrain, &s, &v).intent, Intent::Buy { auction: AuctionId(4), value: ratio(200, 3) });
    }

    #[test]
    fn direct_sale_relist_decays() {
        let s = state(10, 0, &[(1, 10)], 0);
        let mut v = view(Mechanism::DirectSale, vec![]);
        v.own_last_reserve.insert(TokenId(1), int(115));
        assert_eq!(
            run(&DefaultBrain, &s, &v).intent,
            Intent::Sell { token: TokenId(1), mechanism: Mechanism::DirectSale, reserve: ratio(1035, 10) }
        );
    }

    #[test]
    fn oversized_bid_is_clamped_to_balance() {
        let s = state(20, 100, &[], 150);
        let v = view(Mechanism::SecondPrice, vec![entry(4, 1, Mechanism::SecondPrice, 52, Phase::Open)]);
        let out = run(&Fixed(Ok(Intent::Buy { auction: AuctionId(4), value: int(1500) })), &s, &v);
        assert_eq!(out.intent, Intent::Buy { auction: AuctionId(4), value: int(150) });
        assert_eq!(out.source, PlanSource::Brain);

        let rich = state(20, 100, &[], 5000);
        let out = run(&Fixed(Ok(Intent::Buy { auction: AuctionId(4), value: int(-3) })), &rich, &v);
        assert_eq!(out.intent, Intent::Buy { auction: AuctionId(4), value: int(0) });
    }

    #[test]
    fn brain_error_falls_back() {
        let s = state(15, 100, &[], 5000);
        let v = view(Mechanism::SecondPrice, vec![entry(4, 1, Mechanism::SecondPrice, 52, Phase::Open)]);
        let out = run(&Fixed(Err(BrainError::Timeout("10s".into()))), &s, &v);
        assert_eq!(out.source, PlanSource::Fallback);
        assert_eq!(out.intent, Intent::Buy { auction: AuctionId(4), value: int(150) });

        let ghost = run(&Fixed(Ok(Intent::Buy { auction: AuctionId(99), value: int(10) })), &s, &v);
        assert_eq!(ghost.source, PlanSource::Fallback);
    }

    #[test]
    fn never_bids_below_reserve() {
        let s = state(5, 100, &[], 5000);
        let v = view(Mechanism::SecondPrice, vec![entry(4, 1, Mechanism::SecondPrice, 60, Phase::Open)]);
        assert_eq!(run(&DefaultBrain, &s, &v).intent, Intent::Idle);
    }
}
