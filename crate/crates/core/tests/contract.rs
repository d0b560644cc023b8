use std::sync::OnceLock;

use mssp_econ::contract::{
    bellman_update, ic_best_response, recover_multipliers, solve, transaction_sweep, verify_monotonicity,
    ContractPolicy, ControlSpace, GridContract, Mode, PromisedValueGrid, Solution, SolverSettings, ValueFunction,
    TOL_FOC,
};
use mssp_econ::error::SolverError;
use mssp_econ::model::{
    ConditionalOutputDistribution, EffortGrid, Mixing, ModelPrimitives, OutputGrid, PaymentBounds, Preferences,
};

fn moral_hazard() -> &'static Solution {
    static CELL: OnceLock<Solution> = OnceLock::new();
    CELL.get_or_init(|| {
        solve(
            &ModelPrimitives::default_instance(),
            &SolverSettings::new(Mode::MoralHazard, 0.0),
        )
        .unwrap()
    })
}

fn full_info() -> &'static Solution {
    static CELL: OnceLock<Solution> = OnceLock::new();
    CELL.get_or_init(|| {
        solve(
            &ModelPrimitives::default_instance(),
            &SolverSettings::new(Mode::FullInfo, 0.0),
        )
        .unwrap()
    })
}

fn with_discount(rho: f64) -> ModelPrimitives {
    ModelPrimitives::new(
        OutputGrid::uniform(0.0, 100.0, 5).unwrap(),
        EffortGrid::uniform(0.0, 1.0, 21).unwrap(),
        ConditionalOutputDistribution::triangular(5, Mixing::LINEAR, (0.0, 1.0)).unwrap(),
        Preferences::new(0.5, 1.0, 2.0, rho).unwrap(),
        PaymentBounds::new(0.0, 100.0).unwrap(),
    )
    .unwrap()
}

fn two_outputs(efforts: usize) -> ModelPrimitives {
    ModelPrimitives::new(
        OutputGrid::new(vec![0.0, 100.0]).unwrap(),
        EffortGrid::uniform(0.0, 1.0, efforts).unwrap(),
        ConditionalOutputDistribution::triangular(2, Mixing::LINEAR, (0.0, 1.0)).unwrap(),
        Preferences::new(0.5, 1.0, 2.0, 0.9).unwrap(),
        PaymentBounds::new(0.0, 100.0).unwrap(),
    )
    .unwrap()
}

#[test]
fn single_output_pays_a_constant_wage() {
    let model = ModelPrimitives::new(
        OutputGrid::single(50.0).unwrap(),
        EffortGrid::uniform(0.0, 1.0, 5).unwrap(),
        ConditionalOutputDistribution::new(vec![1.0], vec![1.0], Mixing::LINEAR, (0.0, 1.0)).unwrap(),
        Preferences::new(0.5, 1.0, 2.0, 0.9).unwrap(),
        PaymentBounds::new(0.0, 100.0).unwrap(),
    )
    .unwrap();
    let mut settings = SolverSettings::new(Mode::MoralHazard, 0.0);
    settings.v_points = 23;
    let sol = solve(&model, &settings).unwrap();
    let feasible = sol.policy.feasible_indices();
    assert!(!feasible.is_empty());
    for i in feasible {
        let c = sol.policy.contract(i).unwrap();
        assert_eq!(c.effort_index, 0);
        assert!((c.continuations[0] - c.v).abs() <= 1e-6 * 110.0, "w = {} at v = {}", c.continuations[0], c.v);
        let expected = ((1.0 - 0.9) * c.v).powi(2);
        assert!((c.payments[0] - expected).abs() <= 1e-6 * 100.0, "P = {} vs {expected}", c.payments[0]);
    }
}

#[test]
fn full_information_schedules_are_flat() {
    let sol = full_info();
    for c in sol.policy.contracts.iter().flatten() {
        let (pmin, pmax) = c.payments.iter().fold((f64::MAX, f64::MIN), |(a, b), &p| (a.min(p), b.max(p)));
        let (wmin, wmax) = c.continuations.iter().fold((f64::MAX, f64::MIN), |(a, b), &w| (a.min(w), b.max(w)));
        assert!(pmax - pmin <= 1e-6 * 100.0);
        assert!(wmax - wmin <= 1e-6 * 110.0);
    }
}

#[test]
fn full_information_dominates_moral_hazard() {
    let (fi, mh) = (&full_info().value, &moral_hazard().value);
    for i in 0..mh.grid().len() {
        if let Some(m) = mh.value(i) {
            let f = fi.value(i).expect("full-information domain contains the moral-hazard domain");
            assert!(f >= m - 1e-6, "K_FI = {f} < K_MH = {m} at gridpoint {i}");
        }
    }
}

#[test]
fn zero_discount_converges_immediately() {
    let sol = solve(&with_discount(0.0), &SolverSettings::new(Mode::MoralHazard, 0.0)).unwrap();
    assert!(sol.report.iterations <= 2, "{} iterations", sol.report.iterations);
}

#[test]
fn iteration_contracts_at_the_discount_rate() {
    let deltas = &moral_hazard().report.deltas;
    let last_change = moral_hazard().report.domain_changes.last().copied().unwrap_or(0);
    let mut checked = 0;
    for t in last_change + 1..deltas.len() {
        if deltas[t - 1] > 1e-8 {
            assert!(deltas[t] <= 0.9 * deltas[t - 1] * (1.0 + 1e-6) + 1e-12, "ratio {} at {t}", deltas[t] / deltas[t - 1]);
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn solution_is_a_fixed_point() {
    let sol = moral_hazard();
    let settings = SolverSettings::new(Mode::MoralHazard, 0.0);
    let (next, _) = bellman_update(&sol.value, &ModelPrimitives::default_instance(), &settings).unwrap();
    assert!(next.same_domain(&sol.value));
    assert!(next.sup_distance(&sol.value) <= 1e-5, "{}", next.sup_distance(&sol.value));
}

#[test]
fn promises_are_kept_and_effort_is_incentive_compatible() {
    let sol = moral_hazard();
    let model = ModelPrimitives::default_instance();
    for c in sol.policy.contracts.iter().flatten() {
        let own = ContractPolicy::agent_value(c, &model, c.effort);
        assert!((own - c.v).abs() <= 1e-8);
        for &a in model.effort_grid().points() {
            assert!(ContractPolicy::agent_value(c, &model, a) <= own + 1e-8);
        }
    }
}

#[test]
fn value_function_is_concave() {
    assert!(moral_hazard().value.check_concavity().passed);
    assert!(full_info().value.check_concavity().passed);
}

#[test]
fn multiplier_lies_in_the_supergradient() {
    let sol = moral_hazard();
    let m = recover_multipliers(&sol.policy, &sol.value, &ModelPrimitives::default_instance(), 0.0);
    assert!(m.points.iter().filter(|p| p.interior).count() > 20);
    assert!(m.max_envelope_bracket_gap() <= TOL_FOC * m.lambda_scale);
}

#[test]
fn planted_decreasing_payment_is_caught() {
    let model = ModelPrimitives::default_instance();
    let mut policy = moral_hazard().policy.clone();
    assert!(verify_monotonicity(&policy, &model).passed());
    let i = policy.feasible_indices()[10];
    let c = policy.contracts[i].as_mut().unwrap();
    c.payments[3] = c.payments[2] - 1.0;
    let report = verify_monotonicity(&policy, &model);
    assert!(!report.r1.passed);
    let worst = report.r1.worst.unwrap();
    assert_eq!(worst.effort_index, Some(i));
    assert!((worst.magnitude - 1.0).abs() < 1e-9);
}

fn single_policy(model: &ModelPrimitives, payments: Vec<f64>, continuations: Vec<f64>, effort_index: usize) -> ContractPolicy {
    let grid = PromisedValueGrid::for_model(model, 2).unwrap();
    let contract = GridContract {
        v: grid.points()[0],
        effort_index,
        effort: model.effort_grid().points()[effort_index],
        payments,
        continuations,
        lambda: None,
        mu: None,
        clamped: false,
    };
    ContractPolicy {
        mode: Mode::MoralHazard,
        alpha: 0.0,
        grid,
        contracts: vec![Some(contract), None],
    }
}

#[test]
fn steep_schedule_draws_effort_and_flat_one_does_not() {
    let model = ModelPrimitives::default_instance();
    let w = vec![20.0; 5];
    let steep = single_policy(&model, vec![0.0, 5.0, 20.0, 50.0, 100.0], w.clone(), 20);
    let br = ic_best_response(&steep, &model, 0).unwrap();
    assert!(br.effort > 0.0);
    let flat = single_policy(&model, vec![30.0; 5], w, 20);
    let br = ic_best_response(&flat, &model, 0).unwrap();
    assert_eq!(br.effort_index, 0);
    assert!(br.gain > 0.0);
}

#[test]
fn moral_hazard_contract_gives_no_gain_to_any_effort() {
    let model = ModelPrimitives::default_instance();
    let sol = moral_hazard();
    for i in sol.policy.feasible_indices() {
        let br = ic_best_response(&sol.policy, &model, i).unwrap();
        assert!(br.gain <= 1e-8);
    }
}

/// Best split of a utility level `z` into `u(P) + ρ w`, by coarse-to-fine
/// scan over `u(P)`.
fn split_value(z: f64, k: &ValueFunction, scale: f64, rho: f64, wdom: (f64, f64)) -> Option<f64> {
    let (u_max, gamma) = (10.0f64, 0.5f64);
    let lo = (z - rho * wdom.1).max(0.0);
    let hi = (z - rho * wdom.0).min(u_max);
    if lo > hi + 1e-12 {
        return None;
    }
    let eval = |u: f64| {
        let w = ((z - u) / rho).clamp(wdom.0, wdom.1);
        -scale * u.max(0.0).powf(1.0 / gamma) + rho * k.interpolate(w).unwrap()
    };
    let (mut a, mut b) = (lo, hi.max(lo));
    let mut best = (f64::NEG_INFINITY, a);
    for _ in 0..5 {
        let n = 400;
        for j in 0..=n {
            let u = a + (b - a) * j as f64 / n as f64;
            let val = eval(u);
            if val > best.0 {
                best = (val, u);
            }
        }
        let step = (b - a) / n as f64;
        a = (best.1 - 2.0 * step).max(lo);
        b = (best.1 + 2.0 * step).min(hi.max(lo));
    }
    Some(best.0)
}

#[test]
fn two_output_step_matches_brute_force() {
    let model = two_outputs(21);
    let alpha = 0.03;
    let mut settings = SolverSettings::new(Mode::MoralHazard, alpha);
    settings.v_points = 51;
    let grid = PromisedValueGrid::for_model(&model, 51).unwrap();
    let values = grid.points().iter().map(|&v| Some(60.0 - 0.01 * (v - 20.0).powi(2))).collect();
    let k = ValueFunction::new(grid.clone(), values);
    let (next, _) = bellman_update(&k, &model, &settings).unwrap();
    let rho = 0.9;
    let wdom = (grid.points()[0], grid.points()[50]);
    let (z_lo, z_hi) = (rho * wdom.0, 10.0 + rho * wdom.1);
    let efforts = model.effort_grid().points();
    let cost = |a: f64| a * a;
    for &i in &[8usize, 15, 22, 30] {
        let v = grid.points()[i];
        let mut best = f64::NEG_INFINITY;
        for &a in efforts {
            let f = model.distribution().pmf(a).unwrap();
            let b = v + cost(a);
            // Admissible z1: z0 = (b - f1 z1)/f0 inside the utility range, and
            // every rival effort no better than `a`.
            let (mut lo, mut hi) = (z_lo, z_hi);
            let z0_of = |z1: f64| (b - f[1] * z1) / f[0];
            let z1_at = |z0: f64| (b - f[0] * z0) / f[1];
            lo = lo.max(z1_at(z_hi));
            hi = hi.min(z1_at(z_lo));
            for &a2 in efforts {
                let g = model.distribution().pmf(a2).unwrap();
                // g0 z0 + g1 z1 - c(a2) <= b - c(a) = v, linear in z1.
                let slope = g[1] - g[0] * f[1] / f[0];
                let rhs = v + cost(a2) - g[0] * b / f[0];
                if slope.abs() < 1e-15 {
                    if rhs < -1e-9 {
                        hi = lo - 1.0;
                    }
                } else if slope > 0.0 {
                    hi = hi.min(rhs / slope);
                } else {
                    lo = lo.max(rhs / slope);
                }
            }
            if lo > hi {
                continue;
            }
            let objective = |z1: f64| -> f64 {
                match (
                    split_value(z0_of(z1), &k, 1.0 + alpha, rho, wdom),
                    split_value(z1, &k, 1.0 + alpha, rho, wdom),
                ) {
                    (Some(h0), Some(h1)) => f[1] * 100.0 + f[0] * h0 + f[1] * h1,
                    _ => f64::NEG_INFINITY,
                }
            };
            let (mut a_, mut b_) = (lo, hi);
            let mut local = (f64::NEG_INFINITY, lo);
            for _ in 0..5 {
                let n = 300;
                for j in 0..=n {
                    let z1 = a_ + (b_ - a_) * j as f64 / n as f64;
                    let val = objective(z1);
                    if val > local.0 {
                        local = (val, z1);
                    }
                }
                let step = (b_ - a_) / n as f64;
                a_ = (local.1 - 2.0 * step).max(lo);
                b_ = (local.1 + 2.0 * step).min(hi);
            }
            // Independent check of the final point's incentives.
            let z = [z0_of(local.1), local.1];
            let own = f[0] * z[0] + f[1] * z[1] - cost(a);
            for &a2 in efforts {
                let g = model.distribution().pmf(a2).unwrap();
                assert!(g[0] * z[0] + g[1] * z[1] - cost(a2) <= own + 1e-7);
            }
            best = best.max(local.0);
        }
        let solver = next.value(i).unwrap();
        assert!((solver - best).abs() <= 1e-4, "v = {v}: solver {solver}, brute force {best}");
    }
}

fn micro() -> (ModelPrimitives, Vec<f64>, Vec<f64>) {
    let model = two_outputs(5);
    let grid = PromisedValueGrid::for_model(&model, 11).unwrap();
    let payments = vec![0.0, 25.0, 50.0, 75.0, 100.0];
    let continuations = [0usize, 2, 5, 8, 10].iter().map(|&i| grid.points()[i]).collect();
    (model, payments, continuations)
}

/// Value iteration by enumerating every effort and every (P, w) pair per
/// output, with incentive compatibility checked against each rival effort.
fn exhaustive_vi(model: &ModelPrimitives, payments: &[f64], conts: &[f64], alpha: f64) -> Vec<Option<f64>> {
    let grid = PromisedValueGrid::for_model(model, 11).unwrap();
    let v = grid.points().to_vec();
    let rho = model.discount();
    let efforts = model.effort_grid().points().to_vec();
    let pmfs: Vec<Vec<f64>> = efforts.iter().map(|&a| model.distribution().pmf(a).unwrap()).collect();
    let cost = |a: f64| a * a;
    let outputs = [0.0, 100.0];
    let mut k: Vec<Option<f64>> = vec![Some(0.0); v.len()];
    let lookup = |k: &[Option<f64>], w: f64| -> Option<f64> {
        let i = v.iter().position(|&g| (g - w).abs() < 1e-12).unwrap();
        k[i]
    };
    let pairs: Vec<(f64, f64)> = payments.iter().flat_map(|&p| conts.iter().map(move |&w| (p, w))).collect();
    for _ in 0..5000 {
        let mut next = vec![None; v.len()];
        for (i, &vi) in v.iter().enumerate() {
            let mut best: Option<f64> = None;
            for (ai, &a) in efforts.iter().enumerate() {
                let f = &pmfs[ai];
                for &(p0, w0) in &pairs {
                    let Some(k0) = lookup(&k, w0) else { continue };
                    for &(p1, w1) in &pairs {
                        let Some(k1) = lookup(&k, w1) else { continue };
                        let z = [p0.sqrt() + rho * w0, p1.sqrt() + rho * w1];
                        let own = f[0] * z[0] + f[1] * z[1] - cost(a);
                        if own < vi - 1e-9 {
                            continue;
                        }
                        let ic = efforts
                            .iter()
                            .zip(&pmfs)
                            .all(|(&a2, g)| g[0] * z[0] + g[1] * z[1] - cost(a2) <= own + 1e-9);
                        if !ic {
                            continue;
                        }
                        let val = f[0] * (outputs[0] - (1.0 + alpha) * p0 + rho * k0)
                            + f[1] * (outputs[1] - (1.0 + alpha) * p1 + rho * k1);
                        best = Some(best.map_or(val, |b: f64| b.max(val)));
                    }
                }
            }
            next[i] = best;
        }
        let delta = next
            .iter()
            .zip(&k)
            .filter_map(|(a, b)| Some((a.as_ref()? - b.as_ref()?).abs()))
            .fold(0.0, f64::max);
        let same = next.iter().zip(&k).all(|(a, b)| a.is_some() == b.is_some());
        k = next;
        if same && delta <= 1e-12 {
            break;
        }
    }
    k
}

#[test]
fn lattice_solver_matches_exhaustive_search() {
    let (model, payments, continuations) = micro();
    for alpha in [0.0, 0.06] {
        let settings = SolverSettings {
            mode: Mode::MoralHazard,
            alpha,
            v_points: 11,
            tol_vi: 1e-12,
            max_iterations: 5000,
            controls: ControlSpace::Lattice {
                payments: payments.clone(),
                continuations: continuations.clone(),
            },
        };
        let sol = solve(&model, &settings).unwrap();
        let oracle = exhaustive_vi(&model, &payments, &continuations, alpha);
        let mut matched = 0;
        for (i, o) in oracle.iter().enumerate() {
            match (sol.value.value(i), o) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() <= 1e-6, "alpha {alpha}, gridpoint {i}: {a} vs {b}");
                    matched += 1;
                }
                (None, None) => {}
                (a, b) => panic!("feasibility differs at gridpoint {i}: {a:?} vs {b:?}"),
            }
        }
        assert!(matched >= 5, "only {matched} feasible gridpoints");
    }
}

#[test]
fn sweep_with_only_zero_rate_reproduces_plain_solve() {
    let model = ModelPrimitives::default_instance();
    let settings = SolverSettings::new(Mode::FullInfo, 0.0);
    let sweep = transaction_sweep(&model, &settings, &[0.0], None).unwrap();
    assert_eq!(sweep.entries[0].solution, *full_info());
    assert!(sweep.passed());
}

#[test]
fn full_information_payments_fall_with_the_rate() {
    let model = ModelPrimitives::default_instance();
    let settings = SolverSettings::new(Mode::FullInfo, 0.0);
    let sweep = transaction_sweep(&model, &settings, &[0.0, 0.03, 0.06], None).unwrap();
    assert!(sweep.passed(), "{:?}", sweep.violations.first());
}

#[test]
fn unsorted_rates_are_rejected() {
    let model = ModelPrimitives::default_instance();
    let settings = SolverSettings::new(Mode::FullInfo, 0.0);
    let err = transaction_sweep(&model, &settings, &[0.06, 0.0], None).unwrap_err();
    assert!(matches!(err, SolverError::Config { field: "alpha_list", .. }));
}

#[test]
fn nonconvergence_reports_history() {
    let mut settings = SolverSettings::new(Mode::FullInfo, 0.0);
    settings.max_iterations = 3;
    match solve(&ModelPrimitives::default_instance(), &settings) {
        Err(SolverError::NotConverged { iterations, history, .. }) => {
            assert_eq!(iterations, 3);
            assert_eq!(history.len(), 3);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}
