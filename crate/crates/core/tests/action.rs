use critvar::action::{
    adjoint_gradient, minimize_rate, rate_along, sublevel_sample, weak_continuity_probe, GradientConfig, MamConfig, RateStatus, TargetEvent,
};
use critvar::coeffs::CoefficientPair;
use critvar::linalg::{DenseMatrix, NoiseMatrix};
use critvar::lq::LqOracle;
use critvar::models::{allen_cahn1d, heat1d_transport, linear_sde, ou};
use critvar::path::{Control, TimeGrid};
use critvar::skeleton::{forward_march, SkeletonConfig};
use critvar::triple::SpectralTriple;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

#[test]
fn rate_along_simple_controls() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(2.0, 100).unwrap();
    let cfg = SkeletonConfig::default();
    let zero = Control::zeros(grid, 1);
    let (v, u) = rate_along(&triple, &pair, &zero, &[1.0], &cfg).unwrap();
    assert_eq!(v, 0.0);
    assert!(u.mr_distance(&triple, &forward_march(&pair, &zero, &[1.0]).unwrap()) <= 1e-10);
    let (v, _) = rate_along(&triple, &pair, &Control::constant(grid, &[0.7]), &[1.0], &cfg).unwrap();
    assert!((v - 0.5 * 0.49 * 2.0).abs() < 1e-14);

    let (ac, act) = allen_cahn1d(8, 1.0, 1.0, 2).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let (v, _) = rate_along(&act, &ac, &Control::constant(grid, &[1.0, 2.0]), &[0.0; 8], &cfg).unwrap();
    assert!((v - 2.5).abs() < 1e-14);
}

#[test]
fn ball_around_the_free_endpoint_costs_nothing() {
    let cfg = MamConfig::default();
    let grid = TimeGrid::new(0.5, 20).unwrap();
    let (o, ot) = ou(1.0_f64, 1.0).unwrap();
    let (h, ht) = heat1d_transport(1.0, 1.0, 0.5, 4).unwrap();
    let (a, at) = allen_cahn1d(8, 1.0, 1.0, 2).unwrap();
    let cases: Vec<(&dyn CoefficientPair<f64>, &SpectralTriple<f64>)> = vec![(&o, &ot), (&h, &ht), (&a, &at)];
    for (pair, triple) in cases {
        let x: Vec<f64> = (0..pair.dim()).map(|k| 0.4 / (k + 1) as f64).collect();
        let u0 = forward_march(pair, &Control::zeros(grid, pair.noise_dim()), &x).unwrap();
        let ev = TargetEvent::ball(u0.last().to_vec(), 0.05).unwrap();
        let r = minimize_rate(triple, pair, &ev, &x, grid, &cfg).unwrap();
        assert!(r.is_feasible() && r.value <= 1e-6, "{}: {}", pair.name(), r.value);
    }
}

#[test]
fn doubling_the_target_quadruples_the_cost() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let oracle = LqOracle::new(&pair, &[0.0], grid).unwrap();
    let cfg = MamConfig::default();
    let cost = |z: f64, d: f64| minimize_rate(&triple, &pair, &TargetEvent::ball(vec![z], d).unwrap(), &[0.0], grid, &cfg).unwrap().value;
    let (c1, c2) = (cost(0.8, 0.04), cost(1.6, 0.08));
    assert!(rel(c2 / c1, 4.0) < 1e-3, "{c1} {c2}");
    assert!(rel(c1, oracle.ball_cost(&[0.8], 0.04).unwrap()) < 1e-3);
    assert!(rel(c2, oracle.ball_cost(&[1.6], 0.08).unwrap()) < 1e-3);
    // exact form `(|z| − δ)²/(2W)` from the controllability Gramian
    let w = oracle.gramian()[0];
    assert!(rel(oracle.ball_cost(&[0.8], 0.04).unwrap(), 0.76 * 0.76 / (2.0 * w)) < 1e-12);
}

#[test]
fn allen_cahn_minimizer_is_stationary() {
    let (pair, triple) = allen_cahn1d(8, 1.0, 1.0, 2).unwrap();
    let grid = TimeGrid::new(0.5, 20).unwrap();
    let x: Vec<f64> = (0..8).map(|k| 0.2 / (k + 1) as f64).collect();
    // only the driven modes can leave their free evolution
    let mut z = forward_march(&pair, &Control::zeros(grid, 2), &x).unwrap().last().to_vec();
    z[0] += 0.5;
    let ev = TargetEvent::ball(z, 0.05).unwrap();
    let r = minimize_rate(&triple, &pair, &ev, &x, grid, &MamConfig::default()).unwrap();
    assert!(r.is_feasible());
    let p = r.stages.last().unwrap().penalty;
    let (_, g) = adjoint_gradient(&pair, &r.control, &ev, p, &x, &GradientConfig::default()).unwrap();
    // L² representative of the flat gradient
    let norm = (g.values.iter().map(|v| v * v).sum::<f64>() / grid.dt()).sqrt();
    assert!(norm <= 1e-4, "{norm}");
}

#[test]
fn weak_continuity_of_a_linear_pair() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 512).unwrap();
    let psi = Control::constant(grid, &[0.3]);
    let cfg = SkeletonConfig::default();
    let n = [1, 4, 16, 64];
    let zero = weak_continuity_probe(&triple, &pair, &psi, &[1.0], &n, 0.0, 0, &cfg).unwrap();
    assert!(zero.iter().all(|r| r.distance <= 1e-10));
    let a = weak_continuity_probe(&triple, &pair, &psi, &[1.0], &n, 1.0, 0, &cfg).unwrap();
    let b = weak_continuity_probe(&triple, &pair, &psi, &[1.0], &n, 2.0, 0, &cfg).unwrap();
    for (ra, rb) in a.iter().zip(&b) {
        assert!(rel(rb.distance, 2.0 * ra.distance) < 1e-6, "{ra:?} {rb:?}");
    }
    assert!(a.windows(2).all(|w| w[1].distance < w[0].distance));
    assert!(weak_continuity_probe(&triple, &pair, &psi, &[1.0], &n, 1.0, 1, &cfg).is_err());
}

#[test]
fn sublevel_sets_spread_with_the_level() {
    let (pair, triple) = allen_cahn1d(8, 1.0_f64, 1.0, 2).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let x: Vec<f64> = (0..8).map(|k| 0.3 / (k + 1) as f64).collect();
    let cfg = SkeletonConfig::default();
    let at = |level: f64| sublevel_sample(&triple, &pair, level, &x, grid, 40, 11, &cfg).unwrap();
    let (r0, r_half, r2) = (at(0.0), at(0.5), at(2.0));
    assert_eq!(r0.spread, 0.0);
    assert_eq!(r0.mr_norms.len(), 1);
    assert!(r2.spread > r_half.spread, "{} {}", r2.spread, r_half.spread);
    assert!(r2.max_pairwise_distance > r_half.max_pairwise_distance);
    for r in [&r0, &r_half, &r2] {
        assert!(r.min_bound_margin >= 0.0);
    }
    assert!(sublevel_sample(&triple, &pair, -1.0, &x, grid, 4, 0, &cfg).is_err());
}

#[test]
fn larger_balls_are_cheaper() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let values: Vec<f64> = [0.05, 0.1, 0.2]
        .iter()
        .map(|&d| minimize_rate(&triple, &pair, &TargetEvent::ball(vec![1.0], d).unwrap(), &[0.0], grid, &MamConfig::default()).unwrap().value)
        .collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
}

#[test]
fn halfspace_matches_the_oracle() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let oracle = LqOracle::new(&pair, &[0.0], grid).unwrap();
    let ev = TargetEvent::halfspace(vec![1.0], 1.0).unwrap();
    let r = minimize_rate(&triple, &pair, &ev, &[0.0], grid, &MamConfig::default()).unwrap();
    assert!(rel(r.value, oracle.halfspace_cost(&[1.0], 1.0).unwrap()) < 1e-3);
}

/// The second coordinate is not driven by the noise, so only its free
/// evolution is reachable.
#[test]
fn uncontrollable_target_is_infeasible() {
    let a = DenseMatrix::from_row_major(2, vec![1.0_f64, 0.0, 0.0, 1.0]).unwrap();
    let s = NoiseMatrix::from_columns(2, &[vec![1.0, 0.0]]).unwrap();
    let (pair, triple) = linear_sde(a, s).unwrap();
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let ev = TargetEvent::ball(vec![0.0, 2.0], 0.1).unwrap();
    let r = minimize_rate(&triple, &pair, &ev, &[0.0, 0.0], grid, &MamConfig::default()).unwrap();
    assert_eq!(r.status, RateStatus::Infeasible);
    assert!(r.value.is_infinite());
    assert!((r.constraint_violation - 1.9).abs() < 1e-6);

    // the same target on the driven coordinate is reachable
    let ev = TargetEvent::ball(vec![2.0, 0.0], 0.1).unwrap();
    assert!(minimize_rate(&triple, &pair, &ev, &[0.0, 0.0], grid, &MamConfig::default()).unwrap().is_feasible());
}
