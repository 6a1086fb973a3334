use critvar::action::{minimize_augmented, ConstantFunctional, EndpointDistanceSq, LinearEndpoint, MamConfig, TargetEvent};
use critvar::coeffs::CoefficientPair;
use critvar::ldp::{hit_count, laplace_estimate, ldp_slope, lln_check, stochastic_continuity_probe, Z95};
use critvar::linalg::{DenseMatrix, NoiseMatrix};
use critvar::lq::LqOracle;
use critvar::models::{heat1d_transport, linear_sde, ou};
use critvar::path::{Control, TimeGrid};
use critvar::sde::NoiseConfig;
use critvar::skeleton::{forward_march, SkeletonConfig};
use critvar::stats::wilson;

#[test]
fn whole_space_has_rate_zero() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let ev = TargetEvent::ball(vec![0.0], 1e6).unwrap();
    let r = ldp_slope(&triple, &pair, &ev, &[0.2, 0.1, 0.05], 500, &[1.0], grid, 1, &MamConfig::default()).unwrap();
    assert!(r.rows.iter().all(|row| row.hits == row.n && row.scaled_log == 0.0));
    assert_eq!(r.rate_ref, 0.0);
    assert!(r.fitted_rate.abs() < 1e-12);
}

#[test]
fn unreachable_event_reports_infinite_rate() {
    let a = DenseMatrix::from_row_major(2, vec![1.0_f64, 0.0, 0.0, 1.0]).unwrap();
    let s = NoiseMatrix::from_columns(2, &[vec![1.0, 0.0]]).unwrap();
    let (pair, triple) = linear_sde(a, s).unwrap();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let ev = TargetEvent::ball(vec![0.0, 2.0], 0.1).unwrap();
    let r = ldp_slope(&triple, &pair, &ev, &[0.4, 0.2, 0.1], 2000, &[0.0, 0.0], grid, 2, &MamConfig::default()).unwrap();
    assert!(r.rows.iter().all(|row| row.hits == 0 && row.p_hat == 0.0));
    assert!(r.rate_ref.is_infinite() && r.fitted_rate.is_infinite());
    assert!(!r.warnings.is_empty());
}

#[test]
fn laplace_of_a_constant_is_the_constant() {
    let (pair, _) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    for eps in [0.3, 0.01] {
        let est = laplace_estimate(&pair, &ConstantFunctional(0.7), eps, 200, &[1.0], grid, 3).unwrap();
        assert!((est.value - 0.7).abs() < 1e-12);
        assert!((est.effective_sample_size - 200.0).abs() < 1e-9);
    }
    assert!(laplace_estimate(&pair, &ConstantFunctional(0.7), 0.0, 10, &[1.0], grid, 3).is_err());
}

#[test]
fn laplace_of_distance_to_the_free_path_vanishes() {
    let (pair, _) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let u0 = forward_march(&pair, &Control::zeros(grid, 1), &[1.0]).unwrap();
    let h = EndpointDistanceSq(u0.last().to_vec());
    let v: Vec<f64> =
        [0.1, 0.01, 0.001].iter().map(|&e| laplace_estimate(&pair, &h, e, 4000, &[1.0], grid, 4).unwrap().value).collect();
    assert!(v.iter().all(|&x| x >= 0.0));
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    assert!(v[2] < 1e-3);
}

/// For linear Gaussian dynamics `−ε log E exp(−⟨d, Y(T)⟩/ε)` equals
/// `⟨d, m⟩ − ½dᵀWd` at every `ε`.
#[test]
fn laplace_linear_ou() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let oracle = LqOracle::new(&pair, &[1.0], grid).unwrap();
    let d = vec![0.3];
    let exact = oracle.laplace_linear(&d).unwrap();
    let est = laplace_estimate(&pair, &LinearEndpoint(d.clone()), 0.05, 10_000, &[1.0], grid, 5).unwrap();
    assert!((est.value - exact).abs() <= 0.15 * exact, "{} vs {exact}", est.value);
    assert!(est.warnings.is_empty());
    let mam = minimize_augmented(&triple, &pair, &LinearEndpoint(d), &[1.0], grid, &MamConfig::default()).unwrap();
    assert!((mam.value - exact).abs() <= 1e-6 * exact.abs());
}

#[test]
fn zero_noise_sits_on_the_skeleton() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let r = lln_check(&triple, &pair, &[0.1, 0.01, 0.0], 200, &[1.0], grid, 6, &SkeletonConfig::default()).unwrap();
    assert!(r.rows[2].median <= 1e-12 && r.rows[2].mean <= 1e-12);
    assert!(r.strictly_decreasing);
    assert!(lln_check(&triple, &pair, &[0.01, 0.1], 10, &[1.0], grid, 6, &SkeletonConfig::default()).is_err());
}

#[test]
fn controlled_ou_concentrates() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let psi = Control::constant(grid, &[1.0]);
    let r = stochastic_continuity_probe(&triple, &pair, &[psi], &[0.2, 0.02], &[0.1], 2000, &[0.5], 7, &SkeletonConfig::default())
        .unwrap();
    assert!(r.rows[1].p_hat < r.rows[0].p_hat);
    assert_eq!(r.strictly_decreasing, vec![(0, 0.1, true)]);
}

#[test]
fn heat_with_oscillatory_control_concentrates() {
    let (pair, triple) = heat1d_transport(1.0_f64, 1.0, 0.0, 4).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let psi = Control::oscillatory(grid, pair.noise_dim(), 3, 0, 0.5);
    let x: Vec<f64> = (0..triple.dim()).map(|k| 0.3 / (k + 1) as f64).collect();
    let r = stochastic_continuity_probe(&triple, &pair, &[psi], &[0.2, 0.05, 0.01], &[0.1], 1000, &x, 8, &SkeletonConfig::default())
        .unwrap();
    assert!(r.strictly_decreasing[0].2, "{:?}", r.rows);
}

#[test]
fn estimators_are_deterministic() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let ev = TargetEvent::halfspace(vec![1.0], 0.5).unwrap();
    let noise = NoiseConfig { noise_dim: 1, seed: 9 };
    assert_eq!(
        hit_count(&pair, &ev, 0.1, &[0.0], grid, &noise, 3000).unwrap(),
        hit_count(&pair, &ev, 0.1, &[0.0], grid, &noise, 3000).unwrap()
    );
    let run = || ldp_slope(&triple, &pair, &ev, &[0.2, 0.1, 0.05], 3000, &[0.0], grid, 9, &MamConfig::default()).unwrap();
    assert_eq!(run(), run());
}

/// Wilson intervals against the exact Gaussian tail of the discrete scheme.
#[test]
fn wilson_intervals_cover_the_exact_probability() {
    let (pair, _) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let oracle = LqOracle::new(&pair, &[0.0], grid).unwrap();
    let (eps, level) = (0.1, 0.4);
    let exact = oracle.halfspace_probability(&[1.0], level, eps).unwrap();
    let ev = TargetEvent::halfspace(vec![1.0], level).unwrap();
    let covered = (0..20)
        .filter(|&s| {
            let c = hit_count(&pair, &ev, eps, &[0.0], grid, &NoiseConfig { noise_dim: 1, seed: 100 + s }, 2000).unwrap();
            let (lo, hi) = wilson(c.hits, c.n, Z95);
            lo <= exact && exact <= hi
        })
        .count();
    assert!(covered >= 16, "{covered}/20");
}
