use mssp_econ::error::MarketError;
use mssp_econ::oligopoly::{
    alpha_sweep, best_response, check_a5, check_a6, demand, elasticity, foc_residual, nash_solve, price_cap, profit,
    reaction_curve_table, stability, ConstantElasticityDemand, DemandModel, DemandSystem, FirmCost,
};
use proptest::prelude::*;

fn unit_costs() -> Vec<FirmCost> {
    vec![FirmCost::new(0.0, 1.0).unwrap(); 2]
}

/// `N = (M/V) e^{1/x}`: elasticity falls as the own price rises.
struct FallingElasticity;

impl DemandModel for FallingElasticity {
    fn vendors(&self) -> usize {
        2
    }

    fn quantities(&self, prices: &[f64], alpha: f64) -> Vec<f64> {
        prices.iter().map(|p| 50.0 * (1.0 / ((1.0 + alpha) * p)).exp()).collect()
    }
}

#[test]
fn logit_demand_closed_form() {
    let s = DemandSystem::default();
    let n = demand(&s, &[1.0, 1.0], 0.0).unwrap();
    let e = (-1.0f64).exp();
    let expected = 100.0 * e / (2.0 * e + 1.0);
    assert!((n[0] - expected).abs() < 1e-12);
    assert!((n[0] - 21.194155761708547).abs() < 1e-9);
    assert_eq!(n[0], n[1]);
    let far = demand(&s, &[60.0, 1.0], 0.0).unwrap();
    assert!(far[0] < 1e-20);
    assert!(far.iter().sum::<f64>() < 100.0);
}

#[test]
fn invalid_prices_are_rejected() {
    let s = DemandSystem::default();
    assert!(matches!(demand(&s, &[1.0, f64::NAN], 0.0), Err(MarketError::BadPrices(_))));
    assert!(matches!(demand(&s, &[1.0, -1.0], 0.0), Err(MarketError::BadPrices(_))));
    assert!(demand(&s, &[1.0], 0.0).is_err());
    assert!(elasticity(&s, &[1.0, 1.0], -0.1, 0).is_err());
    assert!(DemandSystem::new(100.0, 1.0, 0.0, 1).is_err());
    assert!(FirmCost::new(0.0, 0.0).is_err());
    assert!(nash_solve(&s, &unit_costs(), 0.0, 0.0, None).is_err());
    assert!(nash_solve(&s, &unit_costs()[..1], 0.0, 0.5, None).is_err());
}

proptest! {
    #[test]
    fn closed_form_elasticity_matches_difference_quotient(
        p1 in 0.2f64..6.0, p2 in 0.2f64..6.0, beta in 0.2f64..3.0, alpha in 0.0f64..0.1, w0 in -2.0f64..2.0,
    ) {
        let s = DemandSystem::new(100.0, beta, w0, 2).unwrap();
        let prices = [p1, p2];
        let n = s.quantities(&prices, alpha)[0];
        let h = 1e-6 * p1;
        let up = s.quantities(&[p1 + h, p2], alpha)[0];
        let down = s.quantities(&[p1 - h, p2], alpha)[0];
        let ordinary = -(up - down) / (2.0 * h) * p1 / n;
        let eta = elasticity(&s, &prices, alpha, 0).unwrap();
        prop_assert!((ordinary - (1.0 + alpha) * eta).abs() <= 1e-6 * ordinary.abs());
        let share = n / 100.0;
        prop_assert!((eta - beta * p1 * (1.0 - share)).abs() <= 1e-12 * eta);
    }

    #[test]
    fn best_response_satisfies_the_pricing_condition(
        rival in 0.5f64..6.0, c in 0.3f64..2.0, alpha in 0.0f64..0.1, beta in 0.5f64..2.0,
    ) {
        let s = DemandSystem::new(100.0, beta, 0.0, 2).unwrap();
        let cost = FirmCost::new(0.0, c).unwrap();
        let br = best_response(&s, &cost, &[1.0, rival], alpha, 0, 100.0 * c).unwrap();
        prop_assert!(!br.capped);
        prop_assert!(br.foc_residual.abs() <= 1e-8);
        let at = |p: f64| profit(&s, &cost, &[p, rival], alpha, 0);
        prop_assert!(at(0.99 * br.price) < br.profit);
        prop_assert!(at(1.01 * br.price) < br.profit);
    }

    #[test]
    fn elasticity_rises_with_own_price(p in 0.2f64..5.0, rival in 0.2f64..5.0) {
        let s = DemandSystem::default();
        let lo = elasticity(&s, &[p, rival], 0.0, 0).unwrap();
        let hi = elasticity(&s, &[2.0 * p, rival], 0.0, 0).unwrap();
        prop_assert!(hi > lo);
    }
}

#[test]
fn elasticity_condition_a5() {
    let ratios: Vec<f64> = (0..41).map(|k| 0.5 + 0.05 * k as f64).collect();
    assert!(check_a5(&DemandSystem::default(), &[2.0, 2.0], 0, &ratios, 0.0).unwrap().passed);
    let ce = ConstantElasticityDemand {
        market_size: 100.0,
        eta: 2.0,
        vendors: 2,
    };
    assert!(check_a5(&ce, &[2.0, 2.0], 0, &ratios, 0.0).unwrap().passed);
    let planted = check_a5(&FallingElasticity, &[2.0, 2.0], 0, &ratios, 0.0).unwrap();
    assert!(!planted.passed);
    assert!(planted.worst.unwrap().magnitude > 0.0);
}

#[test]
fn elasticity_condition_a6() {
    let s = DemandSystem::default();
    let eq = nash_solve(&s, &unit_costs(), 0.0, 0.5, None).unwrap();
    for a6 in &eq.a6 {
        assert!(a6.holds && a6.margin > 0.0);
    }
    let elastic = check_a6(&s, &[3.0, 3.0], 0.0, 0).unwrap();
    assert!(elastic.rhs < 0.0 && elastic.holds);
    let inelastic = ConstantElasticityDemand {
        market_size: 100.0,
        eta: 0.5,
        vendors: 2,
    };
    let c = check_a6(&inelastic, &[2.0, 2.0], 0.0, 0).unwrap();
    assert!(c.lhs.abs() < 1e-8 && c.rhs > 0.0 && !c.holds);
}

#[test]
fn constant_elasticity_closed_form() {
    let ce = ConstantElasticityDemand {
        market_size: 100.0,
        eta: 2.0,
        vendors: 2,
    };
    let cost = FirmCost::new(0.0, 1.0).unwrap();
    for (alpha, expected) in [(0.0, 2.0), (0.06, 1.0 / (1.0 - 1.0 / 2.12))] {
        let br = best_response(&ce, &cost, &[1.0, 1.0], alpha, 0, 100.0).unwrap();
        assert!((br.price - expected).abs() <= 1e-9, "{} vs {expected}", br.price);
    }
    let competitive = ConstantElasticityDemand { eta: 1000.0, ..ce };
    let br = best_response(&competitive, &cost, &[1.0, 1.0], 0.0, 0, 100.0).unwrap();
    assert!((br.price - 1.0 / (1.0 - 1e-3)).abs() <= 1e-9);
}

#[test]
fn symmetric_duopoly_equilibrium() {
    let s = DemandSystem::default();
    let eq = nash_solve(&s, &unit_costs(), 0.0, 0.5, None).unwrap();
    assert!((eq.prices[0] - eq.prices[1]).abs() <= 1e-8);
    for i in 0..2 {
        assert!(foc_residual(&s, &unit_costs()[i], &eq.prices, 0.0, i).abs() <= 1e-8);
    }
    assert!(eq.audit.passed);
    let st = stability(&s, &unit_costs(), 0.0, 0.5, 10, 17).unwrap();
    assert!(st.stable && st.max_spread <= 1e-8);
}

#[test]
fn equilibrium_matches_grid_search_of_mutual_best_responses() {
    let s = DemandSystem::default();
    let costs = unit_costs();
    let eq = nash_solve(&s, &costs, 0.0, 0.5, None).unwrap();
    let n = 2000;
    let (lo, hi) = (1.0, 4.0);
    let grid: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let step = grid[1] - grid[0];
    let reply = |firm: usize| -> Vec<usize> {
        grid.iter()
            .map(|&rival| {
                let mut best = (f64::NEG_INFINITY, 0);
                for (k, &own) in grid.iter().enumerate() {
                    let prices = if firm == 0 { [own, rival] } else { [rival, own] };
                    let v = profit(&s, &costs[firm], &prices, 0.0, firm);
                    if v > best.0 {
                        best = (v, k);
                    }
                }
                best.1
            })
            .collect()
    };
    let (r1, r2) = (reply(0), reply(1));
    let mutual: Vec<(usize, usize)> = (0..n).filter(|&j| r2[r1[j]] == j).map(|j| (r1[j], j)).collect();
    assert!(!mutual.is_empty());
    for (i, j) in mutual {
        assert!((grid[i] - eq.prices[0]).abs() <= 2.0 * step);
        assert!((grid[j] - eq.prices[1]).abs() <= 2.0 * step);
    }
}

#[test]
fn costlier_vendor_prices_higher_and_rival_follows() {
    let s = DemandSystem::default();
    let base = nash_solve(&s, &unit_costs(), 0.0, 0.5, None).unwrap();
    let raised = vec![FirmCost::new(0.0, 1.5).unwrap(), FirmCost::new(0.0, 1.0).unwrap()];
    let eq = nash_solve(&s, &raised, 0.0, 0.5, None).unwrap();
    assert!(eq.prices[0] > base.prices[0]);
    assert!(eq.prices[1] >= base.prices[1]);
    assert!(eq.prices[0] > eq.prices[1]);
}

#[test]
fn reaction_curves() {
    let s = DemandSystem::default();
    let grid: Vec<f64> = (0..61).map(|k| 1.0 + 0.05 * k as f64).collect();
    let t0 = reaction_curve_table(&s, &unit_costs(), 0.0, &grid).unwrap();
    let t6 = reaction_curve_table(&s, &unit_costs(), 0.06, &grid).unwrap();
    assert_eq!(t0.firm1, t0.firm2);
    assert!(t0.slopes_positive.iter().all(|&b| b));
    let eq = nash_solve(&s, &unit_costs(), 0.0, 0.5, None).unwrap();
    let (p1, p2) = t0.crossing.unwrap();
    assert!((p1 - eq.prices[0]).abs() <= 0.05 && (p2 - eq.prices[1]).abs() <= 0.05);
    for k in 0..grid.len() {
        assert!(t6.firm1[k] <= t0.firm1[k] && t6.firm2[k] <= t0.firm2[k]);
    }
    assert!(reaction_curve_table(&s, &unit_costs(), 0.0, &[2.0, 1.0]).is_err());
}

#[test]
fn prices_fall_with_the_transaction_cost() {
    let s = DemandSystem::default();
    let only_zero = alpha_sweep(&s, &unit_costs(), &[0.0], 0.5).unwrap();
    assert_eq!(
        only_zero.entries[0].equilibrium,
        nash_solve(&s, &unit_costs(), 0.0, 0.5, None).unwrap()
    );
    let r = alpha_sweep(&s, &unit_costs(), &[0.0, 0.03, 0.06], 0.5).unwrap();
    assert!(r.passed() && r.unverified_pairs.is_empty());
    for w in r.entries.windows(2) {
        for i in 0..2 {
            assert!(w[1].equilibrium.prices[i] < w[0].equilibrium.prices[i]);
        }
    }
    assert!(alpha_sweep(&s, &unit_costs(), &[0.06, 0.0], 0.5).is_err());
}

#[test]
fn vendor_share_falls_as_demand_becomes_more_price_sensitive() {
    let share = |beta: f64| {
        let s = DemandSystem::new(100.0, beta, 0.0, 2).unwrap();
        let r = alpha_sweep(&s, &unit_costs(), &[0.0, 0.06], 0.5).unwrap();
        let e = &r.entries[1];
        (e.vendor_shares[0].unwrap(), e.equilibrium.elasticities[0])
    };
    let (soft, eta_soft) = share(0.5);
    let (sharp, eta_sharp) = share(4.0);
    assert!(eta_sharp > eta_soft);
    assert!(sharp < soft, "{sharp} vs {soft}");
}

#[test]
fn cap_is_one_hundred_times_the_largest_marginal_cost() {
    let costs = vec![FirmCost::new(0.0, 1.0).unwrap(), FirmCost::new(2.0, 3.0).unwrap()];
    assert_eq!(price_cap(&costs), 300.0);
}
