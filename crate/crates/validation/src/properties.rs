use crate::SmallBook;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use v2g_market::equilibrium::supply_coefficients;
use v2g_market::micro::allocate_to_phevs;
use v2g_market::{
    clear, monotonicity_report, run_market, solve_equilibrium, AggregatorState64, Ask64, BuyBid64,
    CostSpec64, LinearMarketModel, MechanismConfig, ParticipantId, Phev64,
};

fn book() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let side = || prop::collection::vec((0u32..12, 0.0f64..10.0), 1..6);
    (side(), side()).prop_map(|(a, b)| {
        // Coarse price grid so ties and merges are common.
        let f = |v: Vec<(u32, f64)>| v.into_iter().map(|(p, q)| (p as f64 * 5.0, q)).collect();
        (f(a), f(b))
    })
}

fn to_book(asks: &[(f64, f64)], bids: &[(f64, f64)]) -> SmallBook {
    SmallBook {
        asks: asks
            .iter()
            .enumerate()
            .map(|(i, &(s, a))| Ask64::new(ParticipantId(i), s, a).unwrap())
            .collect(),
        bids: bids
            .iter()
            .enumerate()
            .map(|(k, &(b, x))| BuyBid64::new(ParticipantId(k), b, x).unwrap())
            .collect(),
    }
}

proptest! {
    #[test]
    fn auction_invariants_hold((asks, bids) in book()) {
        let b = to_book(&asks, &bids);
        prop_assert_eq!(crate::check_auction_invariants(&b), Ok(()));
    }

    #[test]
    fn auction_ignores_input_order((asks, bids) in book()) {
        let b = to_book(&asks, &bids);
        let mut rev = SmallBook { asks: b.asks.clone(), bids: b.bids.clone() };
        rev.asks.reverse();
        rev.bids.reverse();
        let x = clear(&b.asks, &b.bids);
        let y = clear(&rev.asks, &rev.bids);
        prop_assert_eq!(x.price, y.price);
        for a in &b.asks {
            prop_assert!((x.sold_by(a.seller) - y.sold_by(a.seller)).abs() < 1e-9);
        }
    }

    #[test]
    fn proportional_allocation_conserves(
        proposals in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..0.05], 1..200),
        frac in 0.0f64..=1.0,
    ) {
        let total: f64 = proposals.iter().sum();
        let sold = total * frac;
        let q = allocate_to_phevs(&proposals, sold).unwrap();
        let sum: f64 = q.iter().sum();
        prop_assert!((sum - sold).abs() <= 1e-12 * (1.0 + sold));
        for (qi, ai) in q.iter().zip(&proposals) {
            prop_assert!(*qi >= 0.0 && qi <= ai);
        }
    }

    #[test]
    fn best_response_beats_grid(
        p in 0.0f64..60.0,
        eta in 0.0f64..60.0,
        upsilon in 1.0f64..3000.0,
        a_max in 0.0f64..0.06,
        quadratic in any::<bool>(),
    ) {
        let cost = if quadratic { CostSpec64::quadratic(eta, upsilon).unwrap() } else { CostSpec64::linear(eta).unwrap() };
        let a = cost.best_response(p, a_max);
        prop_assert!((0.0..=a_max).contains(&a));
        let best = crate::grid_max_utility(&cost, p, a_max, 2000);
        prop_assert!(crate::utility(&cost, p, a) >= best - 1e-9);
    }

    #[test]
    fn equilibrium_is_a_fixed_point(
        c in 0.001f64..10.0,
        d in 0.0f64..50.0,
        beta in 0.01f64..10.0,
        q0 in 0.0f64..500.0,
        gamma in 0.05f64..0.99,
    ) {
        let coeffs = v2g_market::QuadraticSupplyCoefficients { c, d, degenerate: false, clamps_at_bound: None };
        let sol = solve_equilibrium(&coeffs, beta, q0, gamma);
        if sol.exists {
            assert_relative_eq!(sol.p_star, q0 / (sol.a_star + beta), max_relative = 1e-9);
            let rhs = c * gamma * sol.p_star - d;
            let scale = (c * gamma * sol.p_star).abs().max(d.abs()).max(sol.a_star.abs());
            prop_assert!((sol.a_star - rhs).abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn larger_demand_never_hurts(
        alpha in 0.1f64..10.0,
        beta in 0.1f64..10.0,
        q0 in 0.0f64..500.0,
        extra in 0.0f64..100.0,
        etas in prop::collection::vec((0.0f64..50.0, 0.0f64..0.05), 1..30),
    ) {
        let m1 = LinearMarketModel::new(alpha, beta, q0).unwrap();
        let m2 = LinearMarketModel::new(alpha, beta, q0 + extra).unwrap();
        let r = monotonicity_report(&m1, &m2, 0.91, &etas).unwrap();
        prop_assert!(r.holds);
        prop_assert!(r.second_utility >= r.first_utility);
    }
}

#[test]
fn quadratic_coefficients_from_phevs() {
    let c = supply_coefficients(&[(10.0, 1000.0), (20.0, 2000.0)]).unwrap();
    assert_relative_eq!(c.c, 1.0 / 2000.0 + 1.0 / 4000.0, max_relative = 1e-15);
    assert_relative_eq!(c.d, 10.0 / 2000.0 + 20.0 / 4000.0, max_relative = 1e-15);
}

#[test]
fn mechanism_traces_pass_their_own_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let n = rng.gen_range(1..5);
        let aggs: Vec<AggregatorState64> = (0..n)
            .map(|i| {
                let phevs = (0..rng.gen_range(1..6))
                    .map(|j| {
                        let cost = if rng.gen_bool(0.5) {
                            CostSpec64::linear(rng.gen_range(0.0..50.0)).unwrap()
                        } else {
                            CostSpec64::quadratic(
                                rng.gen_range(0.0..50.0),
                                rng.gen_range(1.0..20.0),
                            )
                            .unwrap()
                        };
                        Phev64::new(ParticipantId(j), rng.gen_range(0.0..3.0), cost).unwrap()
                    })
                    .collect();
                AggregatorState64::new(ParticipantId(i), 0.91, rng.gen_range(0.0..50.0), phevs)
                    .unwrap()
            })
            .collect();
        let buyers: Vec<BuyBid64> = (0..rng.gen_range(1..5))
            .map(|k| {
                BuyBid64::new(
                    ParticipantId(k),
                    rng.gen_range(0.0..60.0),
                    rng.gen_range(0.0..5.0),
                )
                .unwrap()
            })
            .collect();
        let config = MechanismConfig::default();
        let trace = run_market(&buyers, &aggs, &config).unwrap();
        trace.check_invariants(&buyers, &aggs, &config).unwrap();
    }
}

#[test]
fn rank_correlation_oracle() {
    assert_eq!(
        crate::ranks(&[3.0, 1.0, 2.0, 2.0]),
        vec![4.0, 1.0, 2.5, 2.5]
    );
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    assert_relative_eq!(crate::spearman(&x, &[10.0, 20.0, 30.0, 40.0, 50.0]), 1.0);
    assert_relative_eq!(crate::spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]), -1.0);
    // 1 - 6 * sum d^2 / (n (n^2 - 1)) with d = (1, -1, 0, 0, 0).
    assert_relative_eq!(
        crate::spearman(&x, &[2.0, 1.0, 3.0, 4.0, 5.0]),
        1.0 - 12.0 / 120.0,
        max_relative = 1e-12
    );
}

#[test]
fn misreport_oracle_on_fixture() {
    let b = to_book(
        &[(10.0, 5.0), (20.0, 5.0), (30.0, 5.0)],
        &[(35.0, 4.0), (25.0, 4.0), (15.0, 4.0)],
    );
    assert_eq!(crate::revenue_with_report(&b, 0, 5.0), 22.5 * 4.0);
    // Over-reporting to 9 makes seller 0 the marginal seller on its own.
    assert_eq!(crate::revenue_with_report(&b, 0, 9.0), 0.0);
    // Delivery is capped at the true quantity.
    assert_eq!(crate::revenue_with_report(&b, 0, 3.0), 22.5 * 3.0);
    assert_eq!(crate::revenue_with_report(&b, 1, 5.0), 0.0);
}
