//! Rule-based baseline trader.

use num_traits::{One, Zero};

use super::{available_balance, effective_gap, sellable_token, AgentState, Intent, MarketView};
use crate::auctionhouse::{BoardEntry, Phase};
use crate::ids::Mechanism;
use crate::money::{int, ratio, Money, Rational};

/// Reserve multiplier applied to the seller's own valuation.
pub fn reserve_multiplier(mechanism: Mechanism) -> Rational {
    match mechanism {
        Mechanism::DirectSale => ratio(115, 100),
        Mechanism::FirstPrice => ratio(110, 100),
        Mechanism::SecondPrice => ratio(105, 100),
    }
}

/// `max((n-1)/n * v, v/2)`; with no competing buyers the floor applies.
pub fn first_price_heuristic_bid(valuation: &Rational, num_buyers: u32) -> Rational {
    let floor = valuation / int(2);
    if num_buyers == 0 {
        return floor;
    }
    let n = int(i64::from(num_buyers));
    let shaded = valuation * (&n - Rational::one()) / n;
    shaded.max(floor)
}

fn biddable<'a>(state: &'a AgentState, view: &'a MarketView, mechanism: Mechanism) -> impl Iterator<Item = &'a BoardEntry> {
    view.open_auctions
        .iter()
        .filter(move |a| a.phase == Phase::Open && a.mechanism == mechanism && a.seller != state.agent_id && !view.has_pending(a.id))
}

/// One decision of the baseline trader. Direct-sale relists decay from the
/// last posted ask by `decay`; auction relists reuse the fixed markup.
pub fn heuristic_decide(state: &AgentState, view: &MarketView, mechanism: Mechanism, decay: &Rational) -> Intent {
    if let Some((token, capacity)) = sellable_token(state, view) {
        let v = state.valuation(capacity);
        let fresh = &v * reserve_multiplier(mechanism);
        let reserve = match (mechanism, view.own_last_reserve.get(&token)) {
            (Mechanism::DirectSale, Some(prev)) => {
                let decayed = prev * (Rational::one() - decay);
                if decayed < v {
                    v
                } else {
                    decayed
                }
            }
            _ => fresh,
        };
        return Intent::Sell { token, mechanism, reserve };
    }

    if effective_gap(state, view) == 0 {
        return Intent::Idle;
    }
    let budget = available_balance(state, view).to_rational();
    match mechanism {
        Mechanism::DirectSale => {
            let mut best: Option<(&BoardEntry, Rational)> = None;
            for a in biddable(state, view, mechanism) {
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
            match best {
                Some((a, _)) => Intent::Buy { auction: a.id, value: state.valuation(a.capacity_mhz) },
                None => Intent::Idle,
            }
        }
        Mechanism::FirstPrice | Mechanism::SecondPrice => {
            for a in biddable(state, view, mechanism) {
                let v = state.valuation(a.capacity_mhz);
                let raw = if mechanism == Mechanism::FirstPrice { first_price_heuristic_bid(&v, view.num_buyers) } else { v };
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::testutil::*;
    use crate::agents::PendingBid;
    use crate::ids::{AuctionId, TokenId};
    use proptest::prelude::*;

    fn decay() -> Rational {
        ratio(1, 10)
    }

    #[test]
    fn first_price_shade_with_three_buyers() {
        let s = state(20, 100, &[], 5000);
        let v = view(Mechanism::FirstPrice, vec![entry(1, 1, Mechanism::FirstPrice, 55, Phase::Open)]);
        assert_eq!(heuristic_decide(&s, &v, Mechanism::FirstPrice, &decay()), Intent::Buy { auction: AuctionId(1), value: ratio(400, 3) });
    }

    #[test]
    fn first_price_floor_binds_with_one_buyer() {
        assert_eq!(first_price_heuristic_bid(&int(200), 1), int(100));
        assert_eq!(first_price_heuristic_bid(&int(200), 0), int(100));
    }

    #[test]
    fn second_price_bids_valuation() {
        let s = state(15, 100, &[], 5000);
        let v = view(Mechanism::SecondPrice, vec![entry(1, 1, Mechanism::SecondPrice, 52, Phase::Open)]);
        assert_eq!(heuristic_decide(&s, &v, Mechanism::SecondPrice, &decay()), Intent::Buy { auction: AuctionId(1), value: int(150) });
    }

    #[test]
    fn bid_capped_at_balance_and_skipped_below_reserve() {
        let s = state(20, 100, &[], 120);
        let v = view(Mechanism::SecondPrice, vec![entry(1, 1, Mechanism::SecondPrice, 100, Phase::Open)]);
        assert_eq!(heuristic_decide(&s, &v, Mechanism::SecondPrice, &decay()), Intent::Buy { auction: AuctionId(1), value: int(120) });
        let poor = state(20, 100, &[], 90);
        assert_eq!(heuristic_decide(&poor, &v, Mechanism::SecondPrice, &decay()), Intent::Idle);
    }

    #[test]
    fn skips_auctions_with_own_offer() {
        let s = state(20, 100, &[], 5000);
        let mut v = view(
            Mechanism::FirstPrice,
            vec![entry(1, 1, Mechanism::FirstPrice, 55, Phase::Open), entry(2, 2, Mechanism::FirstPrice, 55, Phase::Open)],
        );
        v.own_pending.push(PendingBid { auction: AuctionId(1), value: Money::from_units(133), capacity_mhz: 10, salt: String::new() });
        assert!(matches!(heuristic_decide(&s, &v, Mechanism::FirstPrice, &decay()), Intent::Buy { auction: AuctionId(2), .. }));
    }

    #[test]
    fn direct_sale_picks_largest_surplus() {
        let s = state(20, 100, &[], 5000);
        let v = view(
            Mechanism::DirectSale,
            vec![
                entry(1, 1, Mechanism::DirectSale, 150, Phase::Open),
                entry(2, 2, Mechanism::DirectSale, 104, Phase::Open),
                entry(3, 3, Mechanism::DirectSale, 250, Phase::Open),
            ],
        );
        assert_eq!(heuristic_decide(&s, &v, Mechanism::DirectSale, &decay()), Intent::Buy { auction: AuctionId(2), value: int(200) });
    }

    #[test]
    fn seller_lists_first_idle_token_with_markup() {
        let s = state(5, 0, &[(1, 10), (2, 10)], 5000);
        let v = view(Mechanism::DirectSale, vec![]);
        let mut listed = entry(1, 1, Mechanism::DirectSale, 58, Phase::Open);
        listed.seller = s.agent_id.clone();
        assert_eq!(
            heuristic_decide(&s, &v, Mechanism::DirectSale, &decay()),
            Intent::Sell { token: TokenId(1), mechanism: Mechanism::DirectSale, reserve: ratio(115, 2) }
        );
        let v2 = view(Mechanism::FirstPrice, vec![listed]);
        assert_eq!(
            heuristic_decide(&s, &v2, Mechanism::FirstPrice, &decay()),
            Intent::Sell { token: TokenId(2), mechanism: Mechanism::FirstPrice, reserve: int(55) }
        );
        assert_eq!(
            heuristic_decide(&s, &view(Mechanism::SecondPrice, vec![]), Mechanism::SecondPrice, &decay()),
            Intent::Sell { token: TokenId(1), mechanism: Mechanism::SecondPrice, reserve: ratio(105, 2) }
        );
    }

    #[test]
    fn direct_sale_relist_decays_to_floor() {
        let s = state(10, 0, &[(1, 10)], 0);
        let mut v = view(Mechanism::DirectSale, vec![]);
        v.own_last_reserve.insert(TokenId(1), int(115));
        assert_eq!(
            heuristic_decide(&s, &v, Mechanism::DirectSale, &decay()),
            Intent::Sell { token: TokenId(1), mechanism: Mechanism::DirectSale, reserve: ratio(1035, 10) }
        );
        v.own_last_reserve.insert(TokenId(1), int(101));
        assert!(matches!(heuristic_decide(&s, &v, Mechanism::DirectSale, &decay()), Intent::Sell { reserve, .. } if reserve == int(100)));
    }

    #[test]
    fn satisfied_agent_idles() {
        let s = state(5, 10, &[(1, 10)], 5000);
        let v = view(Mechanism::SecondPrice, vec![entry(1, 9, Mechanism::SecondPrice, 10, Phase::Open)]);
        assert_eq!(heuristic_decide(&s, &v, Mechanism::SecondPrice, &decay()), Intent::Idle);
    }

    proptest! {
        #[test]
        fn first_price_bid_in_half_open_band(v in 1i64..100_000, n in 0u32..50) {
            let v = ratio(v, 100);
            let b = first_price_heuristic_bid(&v, n);
            prop_assert!(b >= &v / int(2));
            prop_assert!(b < v);
        }

        #[test]
        fn never_sells_without_surplus(need in 0u64..200, tokens in 0u32..15) {
            let holdings: Vec<(u32, u32)> = (0..tokens).map(|t| (t, 10)).collect();
            let s = state(7, need, &holdings, 1000);
            for m in Mechanism::ALL {
                let i = heuristic_decide(&s, &view(m, vec![]), m, &decay());
                if s.held_capacity() <= need {
                    let sells = matches!(i, Intent::Sell { .. });
                    prop_assert!(!sells);
                }
            }
        }
    }
}
