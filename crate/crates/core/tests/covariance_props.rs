use gfou::covariance::{check_hypothesis, increment_covariance, CovarianceModel, ModelSpec};
use gfou::grid::GridSpec;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn families() -> Vec<CovarianceModel<f64>> {
    let fbm3 = CovarianceModel::fbm(0.3).unwrap();
    let sub3 = CovarianceModel::subfbm(0.3).unwrap();
    vec![
        CovarianceModel::fbm(0.2).unwrap(),
        fbm3.clone(),
        sub3.clone(),
        CovarianceModel::bifbm(0.6, 0.5).unwrap(),
        CovarianceModel::gensubfbm(0.3, 1.5).unwrap(),
        CovarianceModel::gensubfbm(0.2, 1.0).unwrap(),
        CovarianceModel::mixture(vec![(0.6, fbm3), (0.8, sub3)]).unwrap(),
    ]
}

fn model_strategy() -> impl Strategy<Value = CovarianceModel<f64>> {
    prop_oneof![
        (0.05..0.95f64).prop_map(|h| CovarianceModel::fbm(h).unwrap()),
        (0.05..0.95f64).prop_map(|h| CovarianceModel::subfbm(h).unwrap()),
        (0.05..0.95f64, 0.05..0.95f64).prop_map(|(h, k)| CovarianceModel::bifbm(h, k).unwrap()),
        (0.05..0.6f64, 1.0..1.6f64).prop_map(|(h, k)| CovarianceModel::gensubfbm(h, k).unwrap()),
    ]
}

proptest! {
    #[test]
    fn symmetric_and_zero_at_origin(m in model_strategy(), t in 0.0..20.0f64, s in 0.0..20.0f64) {
        prop_assert_eq!(m.cov(t, s), m.cov(s, t));
        prop_assert!(m.cov(0.0, s).abs() < 1e-12);
    }

    #[test]
    fn variogram_matches_covariance(m in model_strategy(), t in 0.01..10.0f64, s in 0.01..10.0f64) {
        let direct = m.cov(t, t) + m.cov(s, s) - 2.0 * m.cov(t, s);
        prop_assert!((m.variogram(t, s) - direct).abs() < 1e-10 * (1.0 + direct.abs()));
        prop_assert!(m.variogram(t, s) >= -1e-12);
    }

    #[test]
    fn mixed_derivative_matches_finite_difference(
        m in model_strategy(),
        t in 0.2..8.0f64,
        gap in 0.15..4.0f64,
    ) {
        let s = t + gap;
        let h = t.min(s).min(gap) / 100.0;
        let stencil = |h: f64| {
            (m.cov(t + h, s + h) - m.cov(t + h, s - h) - m.cov(t - h, s + h) + m.cov(t - h, s - h)) / (4.0 * h * h)
        };
        // one Richardson step: the bare stencil's h^2 error reaches 2e-4 for small H
        let fd = (4.0 * stencil(0.5 * h) - stencil(h)) / 3.0;
        let exact = m.d2cov_dtds(t, s).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-4 * exact.abs().max(1e-3), "fd {} exact {}", fd, exact);
        let fd1 = (m.cov(t + h, s) - m.cov(t - h, s)) / (2.0 * h);
        let d1 = m.dcov_dt(t, s).unwrap();
        prop_assert!((fd1 - d1).abs() <= 1e-4 * d1.abs().max(1e-3));
    }

    #[test]
    fn psi_is_remainder_of_principal_part(m in model_strategy(), t in 0.2..8.0f64, gap in 0.15..4.0f64) {
        let s = t + gap;
        let h = m.hurst_eff();
        let principal = m.principal_scale() * h * (2.0 * h - 1.0) * gap.powf(2.0 * h - 2.0);
        let psi = m.psi(t, s).unwrap();
        let full = m.d2cov_dtds(t, s).unwrap();
        prop_assert!((principal + psi - full).abs() < 1e-10 * (1.0 + full.abs()));
    }
}

#[test]
fn gram_matrices_are_psd() {
    let grid: Vec<f64> = (1..=50).map(|i| i as f64 * 0.2).collect();
    for m in families() {
        let g = DMatrix::from_fn(50, 50, |i, j| m.cov(grid[i], grid[j]));
        let eig = g.symmetric_eigenvalues();
        let max = eig.max();
        assert!(eig.min() >= -1e-8 * max, "{m}: min eigenvalue {}", eig.min());
    }
}

#[test]
fn increment_covariance_is_psd() {
    let grid = GridSpec::new(5.0, 50).unwrap();
    for m in families() {
        let c = increment_covariance(&m, &grid);
        let g = DMatrix::from_fn(50, 50, |i, j| c.get(i, j));
        let eig = g.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-8 * eig.max(), "{m}");
    }
}

#[test]
fn increment_covariance_reference_entries() {
    // T = 1, n = 2, H = 0.3
    let m = CovarianceModel::fbm(0.3).unwrap();
    let c = increment_covariance(&m, &GridSpec::new(1.0, 2).unwrap());
    let d = 0.5f64.powf(0.6);
    assert!((c.get(0, 0) - d).abs() < 1e-15 && (c.get(1, 1) - d).abs() < 1e-15);
    assert!((c.get(0, 1) - 0.5 * (1.0 - 2.0 * d)).abs() < 1e-15);
}

#[test]
fn fbm_has_no_remainder() {
    let grid = GridSpec::new(10.0, 100).unwrap();
    for h in [0.1, 0.3, 0.45, 0.7] {
        let r = check_hypothesis(&CovarianceModel::fbm(h).unwrap(), &grid, 1.0).unwrap();
        assert_eq!(r.c_prime_estimate, 0.0);
        assert_eq!(r.violations, 0);
    }
}

#[test]
fn hypothesis_constant_is_stable_under_refinement() {
    let coarse = GridSpec::new(10.0, 200).unwrap();
    let fine = coarse.refined();
    for m in families() {
        let a = check_hypothesis(&m, &coarse, 1.0).unwrap();
        let b = check_hypothesis(&m, &fine, 1.0).unwrap();
        assert_eq!(a.violations + b.violations, 0, "{m}");
        assert!(a.c_prime_estimate.is_finite() && a.c_prime_estimate >= 0.0);
        if a.c_prime_estimate > 0.0 {
            let rel = (b.c_prime_estimate / a.c_prime_estimate - 1.0).abs();
            assert!(rel <= 0.1, "{m}: {} vs {}", a.c_prime_estimate, b.c_prime_estimate);
        }
    }
}

#[test]
fn subfbm_constant_within_analytic_bound() {
    // |Psi| (ts)^{1-H} = H(1-2H) (ts)^{1-H} (t+s)^{2H-2} <= H(1-2H) 4^{H-1}
    let h = 0.3;
    let r = check_hypothesis(&CovarianceModel::subfbm(h).unwrap(), &GridSpec::new(10.0, 200).unwrap(), 1.0).unwrap();
    let bound = h * (1.0 - 2.0 * h) * 4f64.powf(h - 1.0);
    assert!(r.c_prime_estimate <= bound * (1.0 + 1e-12));
    assert!(r.c_prime_estimate >= 0.99 * bound);
}

#[test]
fn json_round_trip_and_field_names() {
    let spec: ModelSpec = serde_json::from_str(r#"{"family":"subfbm","H":0.3}"#).unwrap();
    let m = CovarianceModel::<f64>::from_spec(&spec).unwrap();
    assert_eq!(m.hurst_eff(), 0.3);
    let mix = CovarianceModel::<f64>::from_json(
        r#"{"family":"mixture","components":[{"weight":0.5,"family":"fbm","H":0.3},{"weight":1.0,"family":"bifbm","H":0.6,"K":0.5}]}"#,
    )
    .unwrap();
    assert!((mix.hurst_eff() - 0.3).abs() < 1e-12);
    let back = CovarianceModel::<f64>::from_spec(&mix.to_spec()).unwrap();
    assert_eq!(back.cov(1.3, 2.1), mix.cov(1.3, 2.1));
    assert!(CovarianceModel::<f64>::from_json(r#"{"family":"fbm","H":1.2}"#).is_err());
}

#[test]
fn mixture_weights_enter_squared() {
    let a = CovarianceModel::fbm(0.3_f64).unwrap();
    let b = CovarianceModel::subfbm(0.3).unwrap();
    let mix = CovarianceModel::mixture(vec![(2.0, a.clone()), (-1.0, b.clone())]).unwrap();
    let (t, s) = (1.7_f64, 0.4);
    assert!((mix.cov(t, s) - (4.0 * a.cov(t, s) + b.cov(t, s))).abs() < 1e-14);
}

#[test]
fn single_precision_models() {
    let m = CovarianceModel::fbm(0.3_f32).unwrap();
    assert!((m.cov(1.0, 2.0) - 0.757_858_3).abs() < 1e-6);
}
