use critvar::models::{allen_cahn1d, ou};
use critvar::path::{Control, TimeGrid, Trajectory};
use critvar::skeleton::{
    chain_rule_defect, continuous_dependence_probe, fixed_point_defect, forward_march, global_bound, residual, solve_linearized,
    solve_skeleton, verify_global_bound, SkeletonConfig,
};
use critvar::triple::{Space, SpectralTriple};
use critvar::Error;
use std::f64::consts::PI;

fn e1(m: usize) -> Vec<f64> {
    let mut x = vec![0.0; m];
    x[0] = 1.0;
    x
}

/// Linear Dirichlet heat `u' = ∂ₓₓu` with `θ = 1`, `M = 0`, `φ = 0`.
fn heat(m: usize) -> (critvar::models::AllenCahn1d<f64>, SpectralTriple<f64>) {
    allen_cahn1d(m, 0.0, 0.0, 1).unwrap()
}

#[test]
fn linearized_heat_is_a_geometric_recursion() {
    let (pair, triple) = heat(8);
    let grid = TimeGrid::new(0.1, 100).unwrap();
    let psi = Control::zeros(grid, 1);
    let w = Trajectory::zeros(grid, 8);
    let u = solve_linearized(&pair, &w, &psi, None, None, &e1(8)).unwrap();
    let l1 = triple.eigenvalues()[0];
    let dt = grid.dt();
    for i in 0..=100 {
        let exact = (-l1 * grid.node(i)).exp();
        let discrete = (1.0 + dt * l1).powi(-(i as i32));
        assert!((u.state(i)[0] - discrete).abs() < 1e-14);
        assert!((u.state(i)[0] - exact).abs() / exact <= 5.0 * dt * l1 * 0.1);
        assert!(u.state(i)[1..].iter().all(|&c| c == 0.0));
    }
    let z = solve_linearized(&pair, &w, &psi, None, None, &[0.0; 8]).unwrap();
    assert!(z.states.iter().all(|&c| c == 0.0));
}

#[test]
fn mr_norm_of_single_mode_decay() {
    let triple = SpectralTriple::<f64>::dirichlet1d(4, 1.0).unwrap();
    let l1 = PI * PI;
    let grid = TimeGrid::new(1.0, 10_000).unwrap();
    let u = Trajectory::from_fn(grid, 4, |t| vec![(-l1 * t).exp(), 0.0, 0.0, 0.0]);
    // sup ‖u‖_H = 1 and ∫λ₁e^{−2λ₁t}dt = (1 − e^{−2λ₁})/2
    let exact = 1.0 + ((1.0 - (-2.0 * l1).exp()) / 2.0).sqrt();
    assert!((u.mr_norm(&triple) - exact).abs() / exact <= 1e-3);
}

#[test]
fn heat_certificate_against_its_bound() {
    let (pair, triple) = heat(16);
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let psi = Control::zeros(grid, 1);
    let x = e1(16);
    assert!((global_bound(&pair, &psi, &x) - 3f64.sqrt()).abs() < 1e-14);
    let u = solve_skeleton(&triple, &pair, &psi, &x, &SkeletonConfig::default()).unwrap().trajectory;
    let expected = 1.0 + ((1.0 - (-2.0 * PI * PI).exp()) / 2.0).sqrt();
    assert!((u.mr_norm(&triple) - expected).abs() < 1e-2);
    assert!(verify_global_bound(&triple, &u, &pair, &psi, &x) > 0.0);
}

#[test]
fn zero_problem_has_zero_certificates() {
    let (pair, triple) = heat(8);
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let psi = Control::zeros(grid, 1);
    let u = solve_skeleton(&triple, &pair, &psi, &[0.0; 8], &SkeletonConfig::default()).unwrap().trajectory;
    assert_eq!(u.mr_norm(&triple), 0.0);
    assert_eq!(verify_global_bound(&triple, &u, &pair, &psi, &[0.0; 8]), 0.0);
    assert_eq!(residual(&triple, &pair, &psi, &u).unwrap(), 0.0);
}

#[test]
fn residual_decays_with_the_step() {
    let (pair, triple) = heat(8);
    let x: Vec<f64> = (1..=8).map(|k| 1.0 / (k * k) as f64).collect();
    let run = |n: usize| {
        let grid = TimeGrid::new(0.1, n).unwrap();
        let psi = Control::zeros(grid, 1);
        let u = solve_skeleton(&triple, &pair, &psi, &x, &SkeletonConfig::default()).unwrap().trajectory;
        let exact = Trajectory::from_fn(grid, 8, |t| {
            x.iter().zip(triple.eigenvalues()).map(|(&c, &l)| c * (-l * t).exp()).collect()
        });
        (residual(&triple, &pair, &psi, &u).unwrap(), residual(&triple, &pair, &psi, &exact).unwrap())
    };
    let (s1, e1) = run(200);
    let (s2, e2) = run(400);
    let (s3, _) = run(800);
    // scheme output: first order
    assert!((1.6..=2.4).contains(&(s1 / s2)), "{}", s1 / s2);
    assert!((1.6..=2.4).contains(&(s2 / s3)), "{}", s2 / s3);
    // the exact solution only carries quadrature error, at least first order
    assert!(e1 / e2 >= 1.6 && e1 < s1, "{e1} {e2} {s1}");
}

#[test]
fn chain_rule_defect_halves_with_the_step() {
    let (pair, triple) = allen_cahn1d(16, 1.0, 0.0, 1).unwrap();
    let x: Vec<f64> = (1..=16).map(|k| 0.5 / k as f64).collect();
    let d = |n: usize| {
        let grid = TimeGrid::new(0.5, n).unwrap();
        let psi = Control::constant(grid, &[0.0]);
        let u = solve_skeleton(&triple, &pair, &psi, &x, &SkeletonConfig::default()).unwrap().trajectory;
        chain_rule_defect(&pair, &psi, &u).unwrap()
    };
    let (a, b, c) = (d(400), d(800), d(1600));
    assert!((1.6..=2.4).contains(&(a / b)) && (1.6..=2.4).contains(&(b / c)), "{a} {b} {c}");
}

#[test]
fn fixed_point_is_consistent() {
    let (pair, triple) = allen_cahn1d(16, 1.0, 1.0, 2).unwrap();
    let grid = TimeGrid::new(1.0, 400).unwrap();
    let psi = Control::from_fn(grid, 2, |t: f64| vec![(3.0 * t).sin(), 0.5]);
    let x: Vec<f64> = (1..=16).map(|k| 0.3 / k as f64).collect();
    let cfg = SkeletonConfig::default();
    let sol = solve_skeleton(&triple, &pair, &psi, &x, &cfg).unwrap();
    assert!(fixed_point_defect(&triple, &pair, &psi, &sol).unwrap() <= 2.0 * cfg.tol);
    assert!(sol.report.max_contraction_factor() <= 0.5);
    // semilinear pair: the fixed point is the plain semi-implicit march
    let march = forward_march(&pair, &psi, &x).unwrap();
    assert!(march.mr_distance(&triple, &sol.trajectory) <= 1e-8);
}

#[test]
fn continuous_dependence() {
    let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let psi = Control::constant(grid, &[0.3]);
    let cfg = SkeletonConfig::default();
    let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|h| continuous_dependence_probe(&triple, &pair, &psi, &[1.0], &[1.0 + h], &cfg).unwrap())
        .collect();
    for r in &ratios[1..] {
        assert!((r - ratios[0]).abs() <= 1e-6 * ratios[0]);
    }
    assert!(matches!(continuous_dependence_probe(&triple, &pair, &psi, &[1.0], &[1.0], &cfg), Err(Error::InvalidParameter(_))));

    let (ac, act) = allen_cahn1d(16, 1.0, 1.0, 1).unwrap();
    let psi = Control::zeros(grid, 1);
    let mut x = vec![0.0; 16];
    x[0] = 0.1;
    let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|h| {
            let mut x2 = x.clone();
            x2[0] += h;
            x2[1] += h;
            continuous_dependence_probe(&act, &ac, &psi, &x, &x2, &cfg).unwrap()
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo < 1.1, "{ratios:?}");
}

#[test]
fn unforced_heat_norm_is_nonincreasing() {
    let (pair, triple) = heat(32);
    let grid = TimeGrid::new(0.5, 500).unwrap();
    let x: Vec<f64> = (1..=32).map(|k| ((k * 7) % 5) as f64 - 2.0).collect();
    let u = solve_skeleton(&triple, &pair, &Control::zeros(grid, 1), &x, &SkeletonConfig::default()).unwrap().trajectory;
    let norms: Vec<f64> = u.iter().map(|s| triple.norm(s, Space::H).unwrap()).collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0]));
}
