//! Market-quality measurement: concentration, inequality, realized surplus,
//! the Shapley welfare benchmark and transaction efficiency.

use std::collections::BTreeMap;

use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economics::{price_of_anarchy, trade_surplus, PriceOfAnarchy};
use crate::ids::AgentId;
use crate::ledger::{Ledger, TradeRecord};
use crate::money::{int, to_f64, Money, Rational};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("shares must be non-negative and sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("balances must be non-negative")]
    NegativeBalance,
    #[error("coalition game needs exactly one seller, found {0}")]
    SellerCount(usize),
    #[error("permutation enumeration limited to {max} players, got {got}")]
    TooManyPlayers { got: usize, max: usize },
    #[error("Shapley total is zero")]
    ZeroBenchmark,
    #[error("trade {0} already recorded")]
    DuplicateTrade(u64),
    #[error("invalid trade: {0}")]
    InvalidTrade(String),
}

pub type MetricsResult<T> = Result<T, MetricsError>;

/// Herfindahl-Hirschman index, `sum s_i^2`.
pub fn hhi(shares: &[f64]) -> MetricsResult<f64> {
    let sum: f64 = shares.iter().sum();
    if shares.iter().any(|s| *s < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(MetricsError::NotNormalized(sum));
    }
    Ok(shares.iter().map(|s| s * s).sum())
}

/// Normalizes raw holdings into shares. Empty or all-zero input yields no shares.
pub fn shares_of(amounts: &[f64]) -> Vec<f64> {
    let total: f64 = amounts.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    amounts.iter().map(|a| a / total).collect()
}

fn check_balances(balances: &[f64]) -> MetricsResult<Option<f64>> {
    if balances.iter().any(|b| *b < 0.0) {
        return Err(MetricsError::NegativeBalance);
    }
    let total: f64 = balances.iter().sum();
    Ok((total > 0.0).then_some(total))
}

/// Gini coefficient via mean absolute difference,
/// `sum_i sum_j |b_i - b_j| / (2 n^2 mean)`. All-zero input is 0.
pub fn gini(balances: &[f64]) -> MetricsResult<f64> {
    let Some(total) = check_balances(balances)? else { return Ok(0.0) };
    let n = balances.len() as f64;
    let mean = total / n;
    let mut acc = 0.0;
    for a in balances {
        for b in balances {
            acc += (a - b).abs();
        }
    }
    Ok(acc / (2.0 * n * n * mean))
}

/// Gini coefficient via the rank form, `2/n * sum k b_(k) / sum b - (n+1)/n`.
pub fn gini_sorted_rank(balances: &[f64]) -> MetricsResult<f64> {
    let Some(total) = check_balances(balances)? else { return Ok(0.0) };
    let mut sorted = balances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let weighted: f64 = sorted.iter().enumerate().map(|(k, b)| (k as f64 + 1.0) * b).sum();
    Ok(2.0 / n * weighted / total - (n + 1.0) / n)
}

/// Player of the spectrum coalition game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Player {
    pub id: AgentId,
    pub utility_per_mhz: Rational,
    pub is_seller: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyBenchmark {
    /// Sum of all Shapley values; equals the grand-coalition value.
    pub total: Rational,
    pub per_agent: Vec<(AgentId, Rational)>,
}

pub const MAX_SHAPLEY_PLAYERS: usize = 10;

/// Coalition value: zero without the seller, otherwise total capacity times
/// the highest utility among members.
pub fn coalition_value(players: &[Player], members: u32, total_capacity: &Rational) -> Rational {
    let mut has_seller = false;
    let mut best: Option<&Rational> = None;
    for (i, p) in players.iter().enumerate() {
        if members & (1 << i) == 0 {
            continue;
        }
        has_seller |= p.is_seller;
        if best.is_none_or(|b| &p.utility_per_mhz > b) {
            best = Some(&p.utility_per_mhz);
        }
    }
    match (has_seller, best) {
        (true, Some(u)) => total_capacity * u,
        _ => Rational::zero(),
    }
}

/// Shapley values by averaging marginal contributions over every arrival order.
///
/// Orders are enumerated with Heap's algorithm; each (player, predecessor-set)
/// transition is counted and weighted once at the end, so the result is exact.
pub fn shapley_benchmark(players: &[Player], total_capacity: &Rational) -> MetricsResult<ShapleyBenchmark> {
    let n = players.len();
    let sellers = players.iter().filter(|p| p.is_seller).count();
    if sellers != 1 {
        return Err(MetricsError::SellerCount(sellers));
    }
    if n > MAX_SHAPLEY_PLAYERS {
        return Err(MetricsError::TooManyPlayers { got: n, max: MAX_SHAPLEY_PLAYERS });
    }
    let values: Vec<Rational> = (0..1u32 << n).map(|m| coalition_value(players, m, total_capacity)).collect();

    // counts[i][mask]: arrival orders in which player i joins coalition `mask`
    let mut counts = vec![vec![0u64; 1 << n]; n];
    let mut tally = |order: &[usize]| {
        let mut mask = 0u32;
        for &p in order {
            counts[p][mask as usize] += 1;
            mask |= 1 << p;
        }
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    tally(&order);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            tally(&order);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }

    let orders: u64 = (1..=n as u64).product();
    let per_agent: Vec<(AgentId, Rational)> = players
        .iter()
        .enumerate()
        .map(|(p, player)| {
            let mut acc = Rational::zero();
            for (mask, &count) in counts[p].iter().enumerate() {
                if count > 0 {
                    let gain = &values[mask | (1 << p)] - &values[mask];
                    acc += gain * int(count as i64);
                }
            }
            (player.id.clone(), acc / int(orders as i64))
        })
        .collect();
    let total = per_agent.iter().fold(Rational::zero(), |acc, (_, v)| acc + v);
    Ok(ShapleyBenchmark { total, per_agent })
}

/// Transaction efficiency `surplus / benchmark`.
pub fn efficiency_ratio(cumulative_surplus: &Rational, benchmark: &Rational) -> MetricsResult<Rational> {
    if benchmark.is_zero() {
        return Err(MetricsError::ZeroBenchmark);
    }
    Ok(cumulative_surplus / benchmark)
}

/// Running welfare accounts over settled trades.
#[derive(Debug, Clone, Default)]
pub struct SurplusTracker {
    cumulative: Rational,
    buyer_profit: Rational,
    seller_profit: Rational,
    recorded: BTreeMap<u64, Rational>,
}

impl SurplusTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one settled trade's buyer and seller profit; returns the new total.
    pub fn record_trade(&mut self, trade: &TradeRecord, buyer_utility: &Rational, seller_utility: &Rational) -> MetricsResult<Rational> {
        if self.recorded.contains_key(&trade.tx_id) {
            return Err(MetricsError::DuplicateTrade(trade.tx_id));
        }
        let capacity = int(i64::from(trade.capacity_mhz));
        let s = trade_surplus(buyer_utility, seller_utility, &capacity, &trade.price.to_rational())
            .map_err(|e| MetricsError::InvalidTrade(e.to_string()))?;
        self.cumulative += &s.total;
        self.buyer_profit += &s.buyer_profit;
        self.seller_profit += &s.seller_profit;
        self.recorded.insert(trade.tx_id, s.total);
        Ok(self.cumulative.clone())
    }

    pub fn cumulative(&self) -> &Rational {
        &self.cumulative
    }

    pub fn buyer_profit(&self) -> &Rational {
        &self.buyer_profit
    }

    pub fn seller_profit(&self) -> &Rational {
        &self.seller_profit
    }

    pub fn trades(&self) -> usize {
        self.recorded.len()
    }
}

/// Optimal vs realized welfare, accumulated per closed listing.
#[derive(Debug, Clone, Default)]
pub struct WelfareAccount {
    pub optimal: Rational,
    pub realized: Rational,
}

impl WelfareAccount {
    /// `best_valuation` is the highest participating buyer valuation (if any),
    /// `winner_valuation` the valuation of the agent that actually received the token.
    pub fn record(&mut self, seller_valuation: &Rational, best_valuation: Option<&Rational>, winner_valuation: Option<&Rational>) {
        let gain = |v: &Rational| {
            let g = v - seller_valuation;
            if g.is_positive() { g } else { Rational::zero() }
        };
        if let Some(best) = best_valuation {
            self.optimal += gain(best);
        }
        if let Some(w) = winner_valuation {
            self.realized += gain(w);
        }
    }

    pub fn price_of_anarchy(&self) -> PriceOfAnarchy {
        // realized can only exceed the optimum if the participant set was
        // misreported; treat it as optimal rather than erroring mid-run
        price_of_anarchy(&self.optimal, &self.realized).unwrap_or(PriceOfAnarchy::Ratio(int(1)))
    }
}

/// Per-agent inputs a snapshot needs beyond ledger state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentNeed {
    pub id: AgentId,
    pub need_mhz: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPosition {
    pub id: AgentId,
    pub balance: Money,
    pub capacity_mhz: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub tick: u64,
    pub hhi: f64,
    pub gini: f64,
    pub cumulative_surplus: f64,
    pub shapley_total: f64,
    pub efficiency: f64,
    pub residual_gap_mhz: u64,
    pub agents: Vec<AgentPosition>,
}

/// Assembles all market metrics from the ledger at the end of `tick`.
/// Ownership shares are measured in MHz and include unsold inventory.
pub fn snapshot(tick: u64, ledger: &Ledger, needs: &[AgentNeed], surplus: &Rational, shapley_total: &Rational) -> MetricsSnapshot {
    let agents: Vec<AgentPosition> = needs
        .iter()
        .map(|n| AgentPosition {
            id: n.id.clone(),
            balance: ledger.balance(&n.id).unwrap_or(Money::ZERO),
            capacity_mhz: ledger.held_capacity(&n.id),
        })
        .collect();
    let capacities: Vec<f64> = agents.iter().map(|a| a.capacity_mhz as f64).collect();
    let shares = shares_of(&capacities);
    let hhi = if shares.is_empty() { 0.0 } else { hhi(&shares).unwrap_or(f64::NAN) };
    let balances: Vec<f64> = agents.iter().map(|a| a.balance.as_units_f64()).collect();
    let gini = gini(&balances).unwrap_or(f64::NAN);
    let residual_gap_mhz =
        needs.iter().zip(&agents).map(|(n, a)| n.need_mhz.saturating_sub(a.capacity_mhz)).sum();
    let efficiency = efficiency_ratio(surplus, shapley_total).map(|r| to_f64(&r)).unwrap_or(0.0);
    MetricsSnapshot {
        tick,
        hhi,
        gini,
        cumulative_surplus: surplus.to_f64().unwrap_or(f64::NAN),
        shapley_total: to_f64(shapley_total),
        efficiency,
        residual_gap_mhz,
        agents,
    }
}

/// Fixed column order of the per-tick CSV: the six market columns, then
/// `<agent>_balance` and `<agent>_capacity_mhz` per agent in config order.
pub fn csv_header(agents: &[AgentId]) -> Vec<String> {
    let mut cols: Vec<String> =
        ["tick", "hhi", "gini", "cumulative_surplus", "efficiency", "residual_gap"].iter().map(|s| s.to_string()).collect();
    for a in agents {
        cols.push(format!("{a}_balance"));
        cols.push(format!("{a}_capacity_mhz"));
    }
    cols
}

pub fn csv_row(s: &MetricsSnapshot) -> Vec<String> {
    let mut row = vec![
        s.tick.to_string(),
        format!("{:.6}", s.hhi),
        format!("{:.6}", s.gini),
        format!("{:.2}", s.cumulative_surplus),
        format!("{:.6}", s.efficiency),
        s.residual_gap_mhz.to_string(),
    ];
    for a in &s.agents {
        row.push(a.balance.to_string());
        row.push(a.capacity_mhz.to_string());
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::TokenId;
    use crate::ledger::TokenSpec;
    use crate::money::ratio;
    use proptest::prelude::*;

    fn player(id: &str, u: i64, seller: bool) -> Player {
        Player { id: AgentId::new(id), utility_per_mhz: int(u), is_seller: seller }
    }

    #[test]
    fn hhi_examples() {
        assert_eq!(hhi(&[1.0]).unwrap(), 1.0);
        assert!((hhi(&[0.25; 4]).unwrap() - 0.25).abs() < 1e-15);
        assert!((hhi(&[0.5, 0.3, 0.1, 0.1]).unwrap() - 0.36).abs() < 1e-12);
        assert!(matches!(hhi(&[0.5, 0.4]), Err(MetricsError::NotNormalized(_))));
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[5000.0; 4]).unwrap(), 0.0);
        assert!((gini(&[0.0, 0.0, 0.0, 7.0]).unwrap() - 0.75).abs() < 1e-15);
        assert!((gini(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(gini(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gini(&[1.0, -1.0]), Err(MetricsError::NegativeBalance));
    }

    #[test]
    fn shapley_three_player_example() {
        let players = [player("s", 5, true), player("a", 10, false), player("b", 20, false)];
        let r = shapley_benchmark(&players, &int(100)).unwrap();
        assert_eq!(r.total, int(2000));
        assert_eq!(r.per_agent[0].1, ratio(8000, 6));
        assert_eq!(r.per_agent.iter().fold(int(0), |a, (_, v)| a + v), int(2000));
    }

    #[test]
    fn shapley_seller_alone_and_buyer_only() {
        let r = shapley_benchmark(&[player("s", 5, true)], &int(250)).unwrap();
        assert_eq!(r.total, int(1250));
        let players = [player("s", 5, true), player("a", 10, false), player("b", 20, false)];
        assert_eq!(coalition_value(&players, 0b110, &int(100)), int(0));
        assert!(matches!(shapley_benchmark(&players[1..], &int(1)), Err(MetricsError::SellerCount(0))));
        let many: Vec<Player> = (0..11).map(|i| player(&format!("p{i}"), i, i == 0)).collect();
        assert!(matches!(shapley_benchmark(&many, &int(1)), Err(MetricsError::TooManyPlayers { .. })));
    }

    /// Independent subset-weighted oracle for the Shapley value.
    fn shapley_subset_oracle(players: &[Player], cap: &Rational) -> Vec<Rational> {
        let n = players.len();
        let fact = |k: usize| -> i64 { (1..=k as i64).product() };
        (0..n)
            .map(|i| {
                let mut acc = int(0);
                for mask in 0u32..(1 << n) {
                    if mask & (1 << i) != 0 {
                        continue;
                    }
                    let s = mask.count_ones() as usize;
                    let w = ratio(fact(s) * fact(n - s - 1), fact(n));
                    acc += w * (coalition_value(players, mask | (1 << i), cap) - coalition_value(players, mask, cap));
                }
                acc
            })
            .collect()
    }

    #[test]
    fn shapley_matches_subset_oracle_and_symmetry() {
        let players = [player("s", 5, true), player("a", 20, false), player("b", 20, false), player("c", 15, false), player("d", 3, false)];
        let r = shapley_benchmark(&players, &int(250)).unwrap();
        let oracle = shapley_subset_oracle(&players, &int(250));
        for (got, want) in r.per_agent.iter().zip(&oracle) {
            assert_eq!(&got.1, want);
        }
        assert_eq!(r.per_agent[1].1, r.per_agent[2].1);
        assert_eq!(r.total, int(5000));
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(efficiency_ratio(&int(10), &int(10)).unwrap(), int(1));
        assert_eq!(efficiency_ratio(&int(0), &int(10)).unwrap(), int(0));
        let eta = efficiency_ratio(&int(3050), &int(4700)).unwrap();
        assert!((to_f64(&eta) - 0.649).abs() < 5e-4);
        assert_eq!(efficiency_ratio(&int(1), &int(0)), Err(MetricsError::ZeroBenchmark));
    }

    fn trade(tx_id: u64, price_units: i64) -> TradeRecord {
        TradeRecord {
            tx_id,
            tick: 1,
            token_id: TokenId(1),
            capacity_mhz: 10,
            buyer: AgentId::new("b"),
            seller: AgentId::new("s"),
            price: Money::from_units(price_units),
            mechanism: None,
            auction_id: None,
        }
    }

    #[test]
    fn record_trade_accumulates() {
        let mut t = SurplusTracker::new();
        assert_eq!(t.cumulative(), &int(0));
        assert_eq!(t.record_trade(&trade(1, 150), &int(20), &int(5)).unwrap(), int(150));
        assert_eq!(t.record_trade(&trade(2, 200), &int(20), &int(5)).unwrap(), int(300));
        assert_eq!(t.buyer_profit(), &int(50));
        assert_eq!(t.record_trade(&trade(2, 200), &int(20), &int(5)), Err(MetricsError::DuplicateTrade(2)));
    }

    #[test]
    fn welfare_account_poa() {
        let mut w = WelfareAccount::default();
        w.record(&int(50), Some(&int(200)), Some(&int(200)));
        assert!(w.price_of_anarchy().is_optimal());
        w.record(&int(50), Some(&int(200)), Some(&int(100)));
        assert_eq!(w.price_of_anarchy(), PriceOfAnarchy::Ratio(ratio(300, 200)));
        let mut fail = WelfareAccount::default();
        fail.record(&int(50), Some(&int(55)), None);
        assert_eq!(fail.price_of_anarchy(), PriceOfAnarchy::MarketFailure);
    }

    #[test]
    fn snapshot_genesis_and_gap() {
        let mut l = Ledger::new();
        let ids: Vec<AgentId> = (0..4).map(|i| AgentId::new(format!("agent-{i}"))).collect();
        for id in &ids {
            l.open_account(id.clone(), Money::from_units(5000)).unwrap();
        }
        for t in 1..=25 {
            l.mint_token(
                TokenSpec { id: TokenId(t), center_freq_mhz: 3500, bandwidth_mhz: 10, slot_duration: 100, location: "r".into() },
                &ids[0],
            )
            .unwrap();
        }
        let needs: Vec<AgentNeed> =
            ids.iter().enumerate().map(|(i, id)| AgentNeed { id: id.clone(), need_mhz: if i == 0 { 0 } else { 40 } }).collect();
        let s0 = snapshot(0, &l, &needs, &int(0), &int(5000));
        assert_eq!(s0.hhi, 1.0);
        assert_eq!(s0.gini, 0.0);
        assert_eq!(s0.residual_gap_mhz, 120);
        l.apply_settlement(TokenId(1), &ids[1], &ids[0], Money::from_units(100)).unwrap();
        let s1 = snapshot(1, &l, &needs, &int(0), &int(5000));
        assert_eq!(s1.residual_gap_mhz, 110);
        assert_eq!(csv_row(&s1).len(), csv_header(&ids).len());
    }

    proptest! {
        #[test]
        fn gini_forms_agree(v in proptest::collection::vec(0.0f64..1e6, 1..40)) {
            let a = gini(&v).unwrap();
            let b = gini_sorted_rank(&v).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn hhi_equal_split(k in 1usize..200) {
            let shares = vec![1.0 / k as f64; k];
            prop_assert!((hhi(&shares).unwrap() - 1.0 / k as f64).abs() < 1e-12);
        }
    }
}
