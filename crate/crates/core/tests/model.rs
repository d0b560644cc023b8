use mssp_econ::model::{
    check_cdfc, check_mlrp, check_mlrp_cross_product, ConditionalOutputDistribution, EffortGrid, Mixing,
    ModelPrimitives, OutputGrid, PaymentBounds, Preferences,
};
use proptest::prelude::*;

fn normalized(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Anchors with `f_high / f_low` increasing in the output index.
fn ordered_anchors() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..1.0, n),
            prop::collection::vec(0.0f64..0.5, n),
        )
            .prop_map(|(base, steps)| {
                let mut ratio = 1.0;
                let high: Vec<f64> = base
                    .iter()
                    .zip(&steps)
                    .map(|(b, s)| {
                        ratio += s;
                        b * ratio
                    })
                    .collect();
                (normalized(&base), normalized(&high))
            })
    })
}

fn mixing() -> impl Strategy<Value = Mixing> {
    prop_oneof![
        (0.2f64..1.0).prop_map(|exponent| Mixing::Power { exponent }),
        (0.1f64..5.0).prop_map(|rate| Mixing::Exponential { rate }),
    ]
}

proptest! {
    #[test]
    fn pmf_is_a_distribution((lo, hi) in ordered_anchors(), mix in mixing(), a in 0.0f64..1.0) {
        let d = ConditionalOutputDistribution::new(lo, hi, mix, (0.0, 1.0)).unwrap();
        let f = d.pmf(a).unwrap();
        prop_assert!(f.iter().all(|p| *p >= 0.0));
        prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(d.cdf(d.len() - 1, a).unwrap(), 1.0);
        for i in 1..d.len() {
            prop_assert!(d.cdf(i, a).unwrap() >= d.cdf(i - 1, a).unwrap());
        }
    }

    #[test]
    fn density_slope_matches_difference_quotient(
        (lo, hi) in ordered_anchors(), mix in mixing(), a in 0.05f64..0.95,
    ) {
        let d = ConditionalOutputDistribution::new(lo, hi, mix, (0.0, 1.0)).unwrap();
        let h = 1e-6;
        for i in 0..d.len() {
            let fd = (d.density(i, a + h).unwrap() - d.density(i, a - h).unwrap()) / (2.0 * h);
            let exact = d.density_slope(i, a).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{} vs {}", fd, exact);
        }
    }

    #[test]
    fn cdf_curvature_matches_difference_quotient(
        (lo, hi) in ordered_anchors(), mix in mixing(), a in 0.05f64..0.95,
    ) {
        let d = ConditionalOutputDistribution::new(lo, hi, mix, (0.0, 1.0)).unwrap();
        let h = 1e-4;
        for i in 0..d.len() {
            let fd = (d.cdf(i, a + h).unwrap() - 2.0 * d.cdf(i, a).unwrap() + d.cdf(i, a - h).unwrap()) / (h * h);
            let exact = d.cdf_curvature(i, a).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-4 * (1.0 + exact.abs()), "{} vs {}", fd, exact);
        }
    }

    #[test]
    fn ordered_anchors_with_concave_mixing_pass_both_conditions(
        (lo, hi) in ordered_anchors(), mix in mixing(), m in 2usize..25,
    ) {
        let d = ConditionalOutputDistribution::new(lo, hi, mix, (0.0, 1.0)).unwrap();
        let e = EffortGrid::uniform(0.0, 1.0, m).unwrap();
        prop_assert!(check_mlrp(&d, &e).passed);
        prop_assert!(check_mlrp_cross_product(&d, &e).passed);
        prop_assert!(check_cdfc(&d, &e).passed);
    }

    #[test]
    fn swapped_anchors_fail_the_ratio_condition((lo, hi) in ordered_anchors()) {
        prop_assume!(lo.iter().zip(&hi).any(|(l, h)| (l - h).abs() > 1e-6));
        let d = ConditionalOutputDistribution::new(hi, lo, Mixing::LINEAR, (0.0, 1.0)).unwrap();
        let e = EffortGrid::uniform(0.0, 1.0, 11).unwrap();
        prop_assert!(!check_mlrp(&d, &e).passed);
        prop_assert!(!check_mlrp_cross_product(&d, &e).passed);
    }

    #[test]
    fn convex_mixing_fails_convexity((lo, hi) in ordered_anchors(), k in 1.5f64..4.0) {
        prop_assume!(lo.iter().zip(&hi).any(|(l, h)| (l - h).abs() > 1e-6));
        let d = ConditionalOutputDistribution::new(lo, hi, Mixing::Power { exponent: k }, (0.0, 1.0)).unwrap();
        let e = EffortGrid::uniform(0.0, 1.0, 11).unwrap();
        prop_assert!(!check_cdfc(&d, &e).passed);
    }

    #[test]
    fn payment_for_inverts_utility(gamma in 0.1f64..0.95, p in 0.0f64..1000.0) {
        let prefs = Preferences::new(gamma, 1.0, 2.0, 0.9).unwrap();
        let back = prefs.payment_for(prefs.utility(p));
        prop_assert!((back - p).abs() <= 1e-9 * (1.0 + p));
    }

    #[test]
    fn utility_is_increasing_and_concave(gamma in 0.1f64..0.95, p in 0.1f64..100.0, dp in 0.01f64..10.0) {
        let prefs = Preferences::new(gamma, 1.0, 2.0, 0.9).unwrap();
        let (u0, u1, u2) = (prefs.utility(p), prefs.utility(p + dp), prefs.utility(p + 2.0 * dp));
        prop_assert!(u1 > u0);
        prop_assert!(u2 - u1 <= u1 - u0 + 1e-12);
        prop_assert!(prefs.marginal_utility(p) > prefs.marginal_utility(p + dp));
    }

    #[test]
    fn promised_value_bounds_follow_the_extreme_streams(
        gamma in 0.1f64..0.95, kappa in 0.1f64..5.0, theta in 1.1f64..4.0, rho in 0.0f64..0.99,
        p_max in 1.0f64..500.0,
    ) {
        let model = ModelPrimitives::new(
            OutputGrid::uniform(0.0, 100.0, 3).unwrap(),
            EffortGrid::uniform(0.0, 1.0, 5).unwrap(),
            ConditionalOutputDistribution::triangular(3, Mixing::LINEAR, (0.0, 1.0)).unwrap(),
            Preferences::new(gamma, kappa, theta, rho).unwrap(),
            PaymentBounds::new(0.0, p_max).unwrap(),
        ).unwrap();
        let (lo, hi) = model.derive_v_bounds();
        prop_assert!((lo - (-kappa / (1.0 - rho))).abs() <= 1e-9 * (1.0 + lo.abs()));
        prop_assert!((hi - p_max.powf(gamma) / (1.0 - rho)).abs() <= 1e-9 * (1.0 + hi.abs()));
        prop_assert!(lo < hi);
    }
}

#[test]
fn default_instance_passes_both_conditions() {
    let m = ModelPrimitives::default_instance();
    assert!(check_mlrp(m.distribution(), m.effort_grid()).passed);
    assert!(check_mlrp_cross_product(m.distribution(), m.effort_grid()).passed);
    assert!(check_cdfc(m.distribution(), m.effort_grid()).passed);
    let (lo, hi) = m.derive_v_bounds();
    assert!((lo + 10.0).abs() < 1e-12 && (hi - 100.0).abs() < 1e-12);
}

#[test]
fn invalid_primitives_are_rejected() {
    assert!(Preferences::new(1.0, 1.0, 2.0, 0.9).is_err());
    assert!(Preferences::new(0.5, 1.0, 2.0, 1.0).is_err());
    assert!(Preferences::new(0.5, 1.0, 1.0, 0.9).is_err());
    assert!(PaymentBounds::new(-1.0, 10.0).is_err());
    assert!(PaymentBounds::new(5.0, 5.0).is_err());
    assert!(OutputGrid::new(vec![0.0, 0.0]).is_err());
    assert!(ConditionalOutputDistribution::new(vec![0.5, 0.4], vec![0.5, 0.5], Mixing::LINEAR, (0.0, 1.0)).is_err());
    let lo = ConditionalOutputDistribution::triangular(3, Mixing::LINEAR, (0.0, 2.0)).unwrap();
    let err = ModelPrimitives::new(
        OutputGrid::uniform(0.0, 1.0, 3).unwrap(),
        EffortGrid::uniform(0.0, 1.0, 5).unwrap(),
        lo,
        Preferences::new(0.5, 1.0, 2.0, 0.9).unwrap(),
        PaymentBounds::new(0.0, 1.0).unwrap(),
    );
    assert!(err.is_err());
}
