use std::borrow::Cow;

use critvar::coeffs::{CoefficientPair, Coercivity, Phi};
use critvar::linalg::{ColumnOperators, NoiseMatrix, Operator};
use critvar::models::{allen_cahn1d, ns2d_periodic, ou};
use critvar::path::{Control, TimeGrid};
use critvar::sde::{
    ito_defects, ito_identity_check, ito_order, simulate, simulate_map, tightness_constant, tightness_from_norms, tightness_probe, MrObserver,
    NoiseConfig, OVERFLOW_GUARD,
};
use critvar::skeleton::{chain_rule_defect, solve_skeleton, SkeletonConfig};
use critvar::stats::{mean_se, variance_se};

#[test]
fn zero_noise_with_control_reproduces_the_skeleton() {
    let (pair, triple) = allen_cahn1d(16, 1.0_f64, 1.0, 2).unwrap();
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let psi = Control::from_fn(grid, 2, |t: f64| vec![t.cos(), -0.5]);
    let x: Vec<f64> = (1..=16).map(|k| 0.2 / k as f64).collect();
    let cfg = SkeletonConfig::default();
    let u = solve_skeleton(&triple, &pair, &psi, &x, &cfg).unwrap().trajectory;
    let ens = simulate(&pair, 0.0, &x, grid, &NoiseConfig { noise_dim: 2, seed: 1 }, Some(&psi), 3).unwrap();
    for y in &ens.trajectories {
        assert!(y.sup_h_distance(&triple, &u) <= 5.0 * cfg.tol);
    }
}

#[test]
fn ou_terminal_variance() {
    let (a, eps, t) = (1.0_f64, 0.1, 1.0);
    let (pair, _) = ou(a, 1.0).unwrap();
    let grid = TimeGrid::new(t, 1000).unwrap();
    let ens = simulate(&pair, eps, &[0.0], grid, &NoiseConfig { noise_dim: 1, seed: 2 }, None, 10_000).unwrap();
    let ends: Vec<f64> = ens.trajectories.iter().map(|y| y.last()[0]).collect();
    let (var, se) = variance_se(&ends);
    let exact = eps * (1.0 - (-2.0 * a * t).exp()) / (2.0 * a);
    assert!((var - exact).abs() <= 3.0 * se, "{var} vs {exact} (se {se})");
}

#[test]
fn ns2d_paths_stay_divergence_free() {
    let (pair, triple) = ns2d_periodic(1.0_f64, 4, &[[0.5, 0.0], [0.0, 0.5]], 0.3).unwrap();
    let grid = TimeGrid::new(0.1, 50).unwrap();
    let x: Vec<f64> = (0..triple.dim()).map(|k| 0.5 / (k + 1) as f64).collect();
    let ens = simulate(&pair, 0.1, &x, grid, &NoiseConfig { noise_dim: pair.noise_dim(), seed: 3 }, None, 4).unwrap();
    for y in &ens.trajectories {
        assert!(y.iter().all(|s| pair.divergence_norm(s) <= 1e-12));
    }
}

#[test]
fn zero_noise_ito_defect_is_a_chain_rule_defect() {
    let (pair, _) = allen_cahn1d(16, 1.0_f64, 0.0, 1).unwrap();
    let x: Vec<f64> = (1..=16).map(|k| 0.5 / k as f64).collect();
    let max_defect = |n: usize| {
        let grid = TimeGrid::new(0.5, n).unwrap();
        let ens = simulate(&pair, 0.0, &x, grid, &NoiseConfig { noise_dim: 1, seed: 4 }, None, 1).unwrap();
        let d = ito_defects(&pair, 0.0, &ens.trajectories[0], None, &ens.increments(0));
        let psi = Control::zeros(grid, 1);
        (d.iter().map(|v| v.abs()).fold(0.0, f64::max), chain_rule_defect(&pair, &psi, &ens.trajectories[0]).unwrap())
    };
    let (a, ca) = max_defect(400);
    let (b, cb) = max_defect(800);
    // both are O(Δt) defects of the same deterministic identity
    assert!((1.6..=2.4).contains(&(a / b)), "{a} {b}");
    assert!((1.6..=2.4).contains(&(ca / cb)), "{ca} {cb}");
}

#[test]
fn ou_ito_defect_is_unbiased() {
    let (pair, _) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 4096).unwrap();
    let ens = simulate(&pair, 0.1, &[0.0], grid, &NoiseConfig { noise_dim: 1, seed: 5 }, None, 1000).unwrap();
    let rep = ito_identity_check(&ens, &pair);
    assert_eq!(rep.paths, 1000);
    assert!(rep.mean_terminal.abs() <= 3.0 * rep.mean_terminal_se);
    let order = ito_order(&pair, 0.1, &[1.0], TimeGrid::new(1.0, 32).unwrap(), 4, 5, 200).unwrap();
    assert!(order.order + 3.0 * order.order_se >= 0.5, "{order:?}");
}

/// `dY = √ε dW` on `ℝ`.
struct PureNoise {
    a: Operator<f64>,
    b: ColumnOperators<f64>,
}

impl CoefficientPair<f64> for PureNoise {
    fn name(&self) -> &str {
        "pure_noise"
    }
    fn dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn a0(&self, _t: f64, _u: &[f64]) -> Cow<'_, Operator<f64>> {
        Cow::Borrowed(&self.a)
    }
    fn b0(&self, _t: f64, _u: &[f64]) -> Cow<'_, ColumnOperators<f64>> {
        Cow::Borrowed(&self.b)
    }
    fn has_drift(&self) -> bool {
        false
    }
    fn has_state_noise(&self) -> bool {
        false
    }
    fn additive_noise(&self, _t: f64, out: &mut NoiseMatrix<f64>) {
        out.column_mut(0)[0] = 1.0;
    }
    fn coercivity(&self) -> Coercivity<f64> {
        // A = 0 is not coercive; the declaration is never consulted here
        Coercivity { theta: 0.0, m: 0.0, phi: Phi::Constant(0.0) }
    }
}

#[test]
fn pure_noise_energy_identity() {
    let pair = PureNoise { a: Operator::Zero(1), b: ColumnOperators::zero(1, 1) };
    let (eps, x) = (0.2, 0.7);
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let ens = simulate(&pair, eps, &[x], grid, &NoiseConfig { noise_dim: 1, seed: 6 }, None, 20_000).unwrap();
    let v: Vec<f64> = ens.trajectories.iter().map(|y| y.last()[0].powi(2) - eps * 1.0).collect();
    let (m, se) = mean_se(&v);
    assert!((m - x * x).abs() <= 3.0 * se, "{m} vs {} (se {se})", x * x);
    let rep = ito_identity_check(&ens, &pair);
    assert!(rep.mean_terminal.abs() <= 3.0 * rep.mean_terminal_se);
}

#[test]
fn tightness_envelope() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let x = [0.5];
    let gammas = [2.0, 4.0, 8.0];
    let c0 = tightness_constant(&pair, &x, 0.0, 1.0);
    // 4/(1 ∧ 2θ)·exp(2MT + 4K²)(‖x‖² + 2‖φ‖²) with θ = 1, M = 0, φ² = ½
    assert!((c0 - 4.0 * (0.25 + 1.0)).abs() < 1e-12);
    let ens = simulate(&pair, 0.1, &x, grid, &NoiseConfig { noise_dim: 1, seed: 7 }, None, 2000).unwrap();
    assert!(tightness_probe(&ens, &triple, &gammas, c0).iter().all(|r| r.respected));

    let psi = Control::constant(grid, &[1.0]);
    let c1 = tightness_constant(&pair, &x, 1.0, 1.0);
    let out = simulate_map(&pair, 0.1, &x, grid, &NoiseConfig { noise_dim: 1, seed: 7 }, Some(&psi), 2000, |_| {
        MrObserver::new(&triple, grid)
    })
    .unwrap();
    let norms: Vec<f64> = out.iter().map(|s| s.mr_norm).collect();
    assert!(tightness_from_norms(&norms, &gammas, c1).iter().all(|r| r.respected));

    let far = tightness_from_norms(&norms, &[OVERFLOW_GUARD], c1);
    assert_eq!(far[0].exceed, 0);
    assert_eq!(far[0].p_hat, 0.0);
}
