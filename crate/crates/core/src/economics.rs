//! Valuation and mechanism-design arithmetic.
//!
//! Everything here is a pure function. Currency amounts are exact rationals
//! in currency units; callers round to cents when posting to the ledger.

use std::collections::VecDeque;
use std::fmt;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::{clamp_non_negative, int, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EconError {
    #[error("bid history is empty")]
    EmptyHistory,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type EconResult<T> = Result<T, EconError>;

/// Channel and monetization terms for the Shannon-capacity valuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuationParams {
    /// Revenue per (MHz x bps/Hz).
    pub alpha: f64,
    /// Transmit power, mW.
    pub tx_power: f64,
    pub channel_gain: f64,
    /// Noise power, mW.
    pub noise: f64,
    /// Interference from other users, mW.
    pub interference: f64,
}

impl ValuationParams {
    pub fn validate(&self) -> EconResult<()> {
        if self.noise.is_nan() || self.noise <= 0.0 {
            return Err(EconError::InvalidInput("noise must be positive".into()));
        }
        if self.tx_power < 0.0 || self.channel_gain < 0.0 || self.interference < 0.0 || self.alpha < 0.0 {
            return Err(EconError::InvalidInput("power, gain, interference and alpha must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sinr(&self) -> f64 {
        self.tx_power * self.channel_gain / (self.noise + self.interference)
    }
}

/// `alpha * S * log2(1 + P h / (N0 + I))`.
pub fn shannon_valuation(params: &ValuationParams, spectrum_mhz: f64) -> EconResult<f64> {
    params.validate()?;
    if spectrum_mhz < 0.0 {
        return Err(EconError::InvalidInput("spectrum must be non-negative".into()));
    }
    Ok(params.alpha * spectrum_mhz * (1.0 + params.sinr()).log2())
}

/// Willingness to pay for a whole block: utility per MHz times capacity.
pub fn linear_valuation(utility_per_mhz: &Rational, capacity_mhz: &Rational) -> Rational {
    utility_per_mhz * capacity_mhz
}

/// Symmetric uniform-prior equilibrium bid, `(N-1)/N * v`.
pub fn bne_shade_bid(valuation: &Rational, num_bidders: u32) -> EconResult<Rational> {
    if num_bidders == 0 {
        return Err(EconError::InvalidInput("need at least one bidder".into()));
    }
    let n = int(i64::from(num_bidders));
    Ok(valuation * (&n - Rational::one()) / n)
}

/// Sliding window of the most recent winning bids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BidHistory {
    window: usize,
    winning_bids: VecDeque<Rational>,
}

impl BidHistory {
    pub fn new(window: usize) -> Self {
        BidHistory { window, winning_bids: VecDeque::with_capacity(window) }
    }

    /// Builds a history from an ordered list, keeping the last `window` values.
    pub fn from_bids(window: usize, bids: impl IntoIterator<Item = Rational>) -> Self {
        let mut h = Self::new(window);
        for b in bids {
            h.push(b);
        }
        h
    }

    pub fn push(&mut self, bid: Rational) {
        if self.window == 0 {
            return;
        }
        if self.winning_bids.len() == self.window {
            self.winning_bids.pop_front();
        }
        self.winning_bids.push_back(bid);
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.winning_bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.winning_bids.is_empty()
    }

    pub fn bids(&self) -> impl Iterator<Item = &Rational> {
        self.winning_bids.iter()
    }
}

/// Fraction of recorded winning bids strictly below `bid`.
pub fn empirical_win_cdf(history: &BidHistory, bid: &Rational) -> EconResult<Rational> {
    if history.is_empty() {
        return Err(EconError::EmptyHistory);
    }
    let below = history.bids().filter(|w| *w < bid).count();
    Ok(Rational::new((below as i64).into(), (history.len() as i64).into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidSource {
    EmpiricalCdf,
    EquilibriumFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstPriceBid {
    pub bid: Rational,
    /// `(v - b) * F(b)` at the chosen bid; `None` on the fallback path.
    pub expected_surplus: Option<Rational>,
    pub source: BidSource,
}

/// Expected-surplus maximizing first-price bid over the grid
/// `{0, step, 2*step, ...}` restricted to `b < v`. Ties go to the lowest bid.
/// With no history the equilibrium shade for `fallback_bidders` is used.
pub fn optimize_first_price_bid(
    valuation: &Rational,
    history: &BidHistory,
    grid_step: &Rational,
    fallback_bidders: u32,
) -> EconResult<FirstPriceBid> {
    if !valuation.is_positive() {
        return Err(EconError::InvalidInput("valuation must be positive".into()));
    }
    if !grid_step.is_positive() {
        return Err(EconError::InvalidInput("grid step must be positive".into()));
    }
    if history.is_empty() {
        return Ok(FirstPriceBid {
            bid: bne_shade_bid(valuation, fallback_bidders)?,
            expected_surplus: None,
            source: BidSource::EquilibriumFallback,
        });
    }
    let mut sorted: Vec<&Rational> = history.bids().collect();
    sorted.sort();
    let m = int(sorted.len() as i64);

    let mut best_bid = Rational::zero();
    let mut best_score: Option<Rational> = None;
    let mut b = Rational::zero();
    while &b < valuation {
        let below = sorted.partition_point(|w| *w < &b);
        let score = (valuation - &b) * int(below as i64) / &m;
        if best_score.as_ref().is_none_or(|s| &score > s) {
            best_score = Some(score);
            best_bid = b.clone();
        }
        b += grid_step;
    }
    Ok(FirstPriceBid { bid: best_bid, expected_surplus: best_score, source: BidSource::EmpiricalCdf })
}

/// Seller markup and price-decay schedule for price skimming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingPolicy {
    markup: Rational,
    decay: Rational,
}

impl PricingPolicy {
    pub fn new(markup: Rational, decay: Rational) -> EconResult<Self> {
        if markup <= Rational::one() {
            return Err(EconError::InvalidInput(format!("markup must exceed 1, got {markup}")));
        }
        if decay.is_negative() || decay >= Rational::one() {
            return Err(EconError::InvalidInput(format!("decay must lie in [0, 1), got {decay}")));
        }
        Ok(PricingPolicy { markup, decay })
    }

    pub fn markup(&self) -> &Rational {
        &self.markup
    }

    pub fn decay(&self) -> &Rational {
        &self.decay
    }

    /// Number of relists after which the reserve is guaranteed to sit on the
    /// seller's valuation: `ceil(ln(markup) / -ln(1 - decay))`. `None` when the
    /// price never decays.
    pub fn relists_to_floor(&self) -> Option<u32> {
        if self.decay.is_zero() {
            return None;
        }
        // smallest k with markup * (1 - decay)^k <= 1, evaluated exactly
        let keep = Rational::one() - &self.decay;
        let mut level = self.markup.clone();
        let mut k = 0;
        while level > Rational::one() {
            level *= &keep;
            k += 1;
        }
        Some(k)
    }
}

/// Opening ask: `markup * v_s`.
pub fn initial_reserve(seller_valuation: &Rational, policy: &PricingPolicy) -> Rational {
    seller_valuation * policy.markup()
}

/// Next ask after an unsold period: `max(v_s, prev * (1 - decay))`.
pub fn decay_reserve(prev: &Rational, seller_valuation: &Rational, policy: &PricingPolicy) -> Rational {
    let decayed = prev * (Rational::one() - policy.decay());
    if &decayed < seller_valuation {
        seller_valuation.clone()
    } else {
        decayed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurplusBreakdown {
    pub buyer_profit: Rational,
    pub seller_profit: Rational,
    pub total: Rational,
}

/// Per-trade buyer, seller and total surplus at price `price`.
pub fn trade_surplus(
    buyer_utility: &Rational,
    seller_utility: &Rational,
    capacity_mhz: &Rational,
    price: &Rational,
) -> EconResult<SurplusBreakdown> {
    if !capacity_mhz.is_positive() {
        return Err(EconError::InvalidInput("capacity must be positive".into()));
    }
    let buyer_profit = clamp_non_negative(buyer_utility * capacity_mhz - price);
    let seller_profit = price - seller_utility * capacity_mhz;
    let total = &buyer_profit + &seller_profit;
    Ok(SurplusBreakdown { buyer_profit, seller_profit, total })
}

/// Ratio of optimal to realized welfare.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceOfAnarchy {
    Ratio(Rational),
    /// Realized welfare is zero while a beneficial allocation existed.
    MarketFailure,
}

impl PriceOfAnarchy {
    pub fn as_f64(&self) -> f64 {
        match self {
            PriceOfAnarchy::Ratio(r) => r.to_f64().unwrap_or(f64::NAN),
            PriceOfAnarchy::MarketFailure => f64::INFINITY,
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self, PriceOfAnarchy::Ratio(r) if r.is_one())
    }
}

impl fmt::Display for PriceOfAnarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriceOfAnarchy::Ratio(r) => write!(f, "{:.4}", r.to_f64().unwrap_or(f64::NAN)),
            PriceOfAnarchy::MarketFailure => f.write_str("market_failure"),
        }
    }
}

pub fn price_of_anarchy(sw_opt: &Rational, sw_eq: &Rational) -> EconResult<PriceOfAnarchy> {
    if sw_eq.is_negative() {
        return Err(EconError::InvalidInput("realized welfare is negative".into()));
    }
    if sw_eq > sw_opt {
        return Err(EconError::InvalidInput(format!("realized welfare {sw_eq} exceeds optimum {sw_opt}")));
    }
    if sw_eq.is_zero() {
        return Ok(if sw_opt.is_zero() { PriceOfAnarchy::Ratio(Rational::one()) } else { PriceOfAnarchy::MarketFailure });
    }
    Ok(PriceOfAnarchy::Ratio(sw_opt / sw_eq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::ratio;
    use proptest::prelude::*;

    fn params(alpha: f64, p: f64) -> ValuationParams {
        ValuationParams { alpha, tx_power: p, channel_gain: 1.0, noise: 1.0, interference: 0.0 }
    }

    #[test]
    fn shannon_examples() {
        assert!((shannon_valuation(&params(1.0, 1.0), 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(shannon_valuation(&params(1.0, 0.0), 10.0).unwrap(), 0.0);
        assert!((shannon_valuation(&params(1.0, 3.0), 10.0).unwrap() - 20.0).abs() < 1e-12);
        let mut bad = params(1.0, 1.0);
        bad.noise = 0.0;
        assert!(shannon_valuation(&bad, 10.0).is_err());
    }

    #[test]
    fn shannon_is_concave_in_sinr() {
        let v = |s: f64| shannon_valuation(&params(2.0, s), 10.0).unwrap();
        let h = 0.25;
        let mut s = 0.0;
        while s < 50.0 {
            let second = v(s + 2.0 * h) - 2.0 * v(s + h) + v(s);
            assert!(second <= 1e-12, "second difference {second} at {s}");
            s += 0.5;
        }
    }

    #[test]
    fn linear_valuation_examples() {
        assert_eq!(linear_valuation(&int(20), &int(10)), int(200));
        assert_eq!(linear_valuation(&int(0), &int(10)), int(0));
        assert_eq!(linear_valuation(&int(15), &int(10)), int(150));
    }

    #[test]
    fn bne_examples() {
        assert_eq!(bne_shade_bid(&int(20), 3).unwrap(), ratio(40, 3));
        assert_eq!(bne_shade_bid(&int(10), 2).unwrap(), int(5));
        let big = bne_shade_bid(&int(20), 1000).unwrap();
        assert!((int(20) - big) / int(20) <= ratio(1, 1000));
        assert!(bne_shade_bid(&int(20), 0).is_err());
    }

    #[test]
    fn cdf_examples() {
        let h = BidHistory::from_bids(20, [int(10), int(12), int(14)]);
        assert_eq!(empirical_win_cdf(&h, &int(13)).unwrap(), ratio(2, 3));
        assert_eq!(empirical_win_cdf(&h, &int(9)).unwrap(), int(0));
        assert_eq!(empirical_win_cdf(&h, &int(15)).unwrap(), int(1));
        assert_eq!(empirical_win_cdf(&BidHistory::new(5), &int(1)), Err(EconError::EmptyHistory));
    }

    #[test]
    fn history_window_evicts_oldest() {
        let h = BidHistory::from_bids(2, [int(1), int(2), int(3)]);
        assert_eq!(h.bids().cloned().collect::<Vec<_>>(), vec![int(2), int(3)]);
    }

    #[test]
    fn optimizer_examples() {
        let half = ratio(1, 2);
        let h = BidHistory::from_bids(20, [int(10), int(12), int(14)]);
        let r = optimize_first_price_bid(&int(20), &h, &half, 3).unwrap();
        assert_eq!(r.bid, ratio(29, 2));
        assert_eq!(r.expected_surplus, Some(ratio(11, 2)));

        let high = BidHistory::from_bids(20, [int(100)]);
        let r = optimize_first_price_bid(&int(20), &high, &half, 3).unwrap();
        assert_eq!(r.bid, int(0));
        assert_eq!(r.expected_surplus, Some(int(0)));

        let low = BidHistory::from_bids(20, [int(5)]);
        assert_eq!(optimize_first_price_bid(&int(20), &low, &half, 3).unwrap().bid, ratio(11, 2));
    }

    #[test]
    fn optimizer_falls_back_without_history() {
        let r = optimize_first_price_bid(&int(20), &BidHistory::new(20), &ratio(1, 2), 3).unwrap();
        assert_eq!(r.bid, ratio(40, 3));
        assert_eq!(r.source, BidSource::EquilibriumFallback);
    }

    #[test]
    fn optimizer_excludes_the_valuation_itself() {
        // every grid point below v wins with certainty only at b > 19.5, but b = 20 is excluded
        let h = BidHistory::from_bids(20, [ratio(39, 2)]);
        let r = optimize_first_price_bid(&int(20), &h, &ratio(1, 2), 3).unwrap();
        assert!(r.bid < int(20));
        assert_eq!(r.bid, int(0));
    }

    #[test]
    fn reserve_examples() {
        let skim = PricingPolicy::new(ratio(115, 100), ratio(1, 10)).unwrap();
        assert_eq!(initial_reserve(&int(100), &skim), int(115));
        assert_eq!(initial_reserve(&int(0), &skim), int(0));
        let fp = PricingPolicy::new(ratio(110, 100), ratio(0, 1)).unwrap();
        assert_eq!(initial_reserve(&int(100), &fp), int(110));

        assert_eq!(decay_reserve(&int(115), &int(100), &skim), ratio(1035, 10));
        assert_eq!(decay_reserve(&ratio(1035, 10), &int(100), &skim), int(100));
        assert_eq!(decay_reserve(&int(115), &int(100), &fp), int(115));
        assert_eq!(skim.relists_to_floor(), Some(2));
        assert_eq!(fp.relists_to_floor(), None);
    }

    #[test]
    fn pricing_policy_validation() {
        assert!(PricingPolicy::new(int(1), int(0)).is_err());
        assert!(PricingPolicy::new(ratio(11, 10), int(1)).is_err());
        assert!(PricingPolicy::new(ratio(11, 10), ratio(-1, 10)).is_err());
    }

    #[test]
    fn surplus_examples() {
        let s = trade_surplus(&int(20), &int(5), &int(10), &int(150)).unwrap();
        assert_eq!((s.buyer_profit, s.seller_profit, s.total), (int(50), int(100), int(150)));
        assert_eq!(trade_surplus(&int(20), &int(5), &int(10), &int(200)).unwrap().buyer_profit, int(0));
        for p in [120, 180] {
            assert_eq!(trade_surplus(&int(20), &int(5), &int(10), &int(p)).unwrap().total, int(150));
        }
        assert!(trade_surplus(&int(20), &int(5), &int(0), &int(1)).is_err());
    }

    #[test]
    fn poa_examples() {
        assert_eq!(price_of_anarchy(&int(150), &int(150)).unwrap(), PriceOfAnarchy::Ratio(int(1)));
        assert_eq!(price_of_anarchy(&int(150), &int(100)).unwrap(), PriceOfAnarchy::Ratio(ratio(3, 2)));
        assert_eq!(price_of_anarchy(&int(150), &int(0)).unwrap(), PriceOfAnarchy::MarketFailure);
        assert_eq!(price_of_anarchy(&int(0), &int(0)).unwrap(), PriceOfAnarchy::Ratio(int(1)));
        assert!(price_of_anarchy(&int(100), &int(150)).is_err());
    }

    proptest! {
        #[test]
        fn bne_in_range_and_monotone(v in 1i64..100_000, n in 2u32..50) {
            let v = ratio(v, 100);
            let b = bne_shade_bid(&v, n).unwrap();
            prop_assert!(b >= int(0) && b < v);
            prop_assert!(bne_shade_bid(&(&v + ratio(1, 100)), n).unwrap() > b);
            prop_assert!(bne_shade_bid(&v, n + 1).unwrap() > b);
        }

        #[test]
        fn cdf_is_monotone(bids in proptest::collection::vec(0i64..1000, 1..30), a in 0i64..1100, d in 0i64..200) {
            let h = BidHistory::from_bids(30, bids.into_iter().map(int));
            let lo = empirical_win_cdf(&h, &int(a)).unwrap();
            let hi = empirical_win_cdf(&h, &int(a + d)).unwrap();
            prop_assert!(lo <= hi);
            prop_assert!(lo >= int(0) && hi <= int(1));
        }

        #[test]
        fn decay_sequence_reaches_floor(markup in 101i64..300, decay in 1i64..99, vs in 1i64..1000) {
            let policy = PricingPolicy::new(ratio(markup, 100), ratio(decay, 100)).unwrap();
            let vs = int(vs);
            let mut r = initial_reserve(&vs, &policy);
            let bound = policy.relists_to_floor().unwrap();
            for _ in 0..bound {
                let next = decay_reserve(&r, &vs, &policy);
                prop_assert!(next <= r && next >= vs);
                r = next;
            }
            prop_assert_eq!(r, vs);
        }

        #[test]
        fn surplus_is_transfer_neutral(ub in 0i64..50, us in 0i64..50, c in 1i64..50, k1 in 0i64..=100, k2 in 0i64..=100) {
            let (ub, us, c) = (int(ub), int(us), int(c));
            let wtp = &ub * &c;
            let a = trade_surplus(&ub, &us, &c, &(&wtp * ratio(k1, 100))).unwrap();
            let b = trade_surplus(&ub, &us, &c, &(&wtp * ratio(k2, 100))).unwrap();
            prop_assert_eq!(&a.total, &b.total);
            prop_assert_eq!(a.total, (ub - us) * c);
        }
    }
}
