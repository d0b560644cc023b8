use std::sync::OnceLock;

use mssp_econ::contract::{solve, Mode, Solution, SolverSettings};
use mssp_econ::error::SimulationError;
use mssp_econ::model::{
    ConditionalOutputDistribution, EffortGrid, Mixing, ModelPrimitives, OutputGrid, PaymentBounds, Preferences,
};
use mssp_econ::simulator::{
    buyer_optimal_v0, deviation_value, estimate_agent_value, estimate_principal_value, output_frequency_check,
    policy_domain, simulate,
};

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

fn gridpoint_with_effort(sol: &Solution) -> usize {
    let idx = sol.policy.feasible_indices();
    *idx.iter()
        .filter(|&&i| sol.policy.contract(i).unwrap().effort > 0.0)
        .nth(idx.len() / 3)
        .expect("some contract asks for effort")
}

#[test]
fn same_seed_same_history() {
    let model = ModelPrimitives::default_instance();
    let sol = full_info();
    let v0 = buyer_optimal_v0(&sol.value).unwrap();
    let a = simulate(&sol.policy, &model, v0, 200, 7).unwrap();
    let b = simulate(&sol.policy, &model, v0, 200, 7).unwrap();
    let c = simulate(&sol.policy, &model, v0, 200, 8).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.periods.len(), 200);
    assert_ne!(a, c);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn history_follows_the_policy() {
    let model = ModelPrimitives::default_instance();
    let sol = full_info();
    let i = gridpoint_with_effort(sol);
    let c = sol.policy.contract(i).unwrap();
    let h = simulate(&sol.policy, &model, c.v, 50, 3).unwrap();
    for p in &h.periods {
        assert_eq!(p.gridpoint, i);
        assert_eq!(p.effort, c.effort);
        assert_eq!(p.payment, c.payments[p.output_index]);
        assert_eq!(p.next_v, c.continuations[p.output_index]);
    }
    for w in h.periods.windows(2) {
        assert_eq!(w[1].v, w[0].next_v);
    }
}

#[test]
fn promise_is_kept_on_average() {
    let model = ModelPrimitives::default_instance();
    let sol = full_info();
    let (lo, hi) = policy_domain(&sol.policy).unwrap();
    for t in [0.2, 0.5, 0.8] {
        let v0 = lo + t * (hi - lo);
        let e = estimate_agent_value(&sol.policy, &model, v0, 2000, 200, 11).unwrap();
        assert!(e.covers(v0, 0.0), "v0 = {v0}: {e:?}");
        let k = sol.value.interpolate(v0).unwrap();
        let b = estimate_principal_value(&sol.policy, &model, v0, 2000, 200, 11).unwrap();
        assert!(b.covers(k, 0.0), "K(v0) = {k}: {b:?}");
    }
}

#[test]
fn null_deviation_reproduces_compliance() {
    let model = ModelPrimitives::default_instance();
    let sol = full_info();
    let i = gridpoint_with_effort(sol);
    let c = sol.policy.contract(i).unwrap();
    let comply = estimate_agent_value(&sol.policy, &model, c.v, 500, 100, 5).unwrap();
    let same = deviation_value(&sol.policy, &model, c.v, &|_| c.effort_index, 500, 100, 5).unwrap();
    assert_eq!(comply, same);
}

#[test]
fn shirking_pays_under_the_full_information_contract() {
    let model = ModelPrimitives::default_instance();
    let sol = full_info();
    let c = sol.policy.contract(gridpoint_with_effort(sol)).unwrap();
    let comply = estimate_agent_value(&sol.policy, &model, c.v, 1000, 200, 9).unwrap();
    let shirk = deviation_value(&sol.policy, &model, c.v, &|_| 0, 1000, 200, 9).unwrap();
    let noise = 3.0 * (comply.stderr.powi(2) + shirk.stderr.powi(2)).sqrt();
    assert!(shirk.mean - comply.mean > noise + comply.truncation_bound + shirk.truncation_bound);
}

#[test]
fn single_output_has_no_variance() {
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
    let i = sol.policy.feasible_indices()[3];
    let v0 = sol.policy.grid.points()[i];
    let e = estimate_agent_value(&sol.policy, &model, v0, 100, 300, 1).unwrap();
    assert!(e.stderr < 1e-9);
    assert!((e.mean - v0).abs() <= e.truncation_bound + 1e-6);
}

#[test]
fn estimate_does_not_depend_on_thread_count() {
    let model = ModelPrimitives::default_instance();
    let sol = full_info();
    let v0 = buyer_optimal_v0(&sol.value).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_agent_value(&sol.policy, &model, v0, 300, 100, 21).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn output_frequencies_match_the_mixture() {
    let model = ModelPrimitives::default_instance();
    let sol = full_info();
    let v0 = buyer_optimal_v0(&sol.value).unwrap();
    let check = output_frequency_check(&sol.policy, &model, v0, 500, 200, 4).unwrap();
    assert_eq!(check.observed.iter().sum::<u64>(), 500 * 200);
    assert!(check.within_critical, "{check:?}");
}

#[test]
fn rejects_bad_inputs() {
    let model = ModelPrimitives::default_instance();
    let sol = full_info();
    let (lo, hi) = policy_domain(&sol.policy).unwrap();
    assert!(matches!(
        estimate_agent_value(&sol.policy, &model, lo, 10, 10, 0),
        Err(SimulationError::TooFewPaths { min: 100, got: 10 })
    ));
    assert!(matches!(
        simulate(&sol.policy, &model, hi + 1.0, 10, 0),
        Err(SimulationError::InfeasibleStart { .. })
    ));
}
