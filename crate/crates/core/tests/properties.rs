use critvar::coeffs::{
    classify_exponent, draw_samples, probe_coercivity_ab_on, probe_lipschitz, Coefficient, Criticality, Exponent, NoiseScaled, Rational,
};
use critvar::ldp::hit_count;
use critvar::action::TargetEvent;
use critvar::models::{allen_cahn1d, heat1d_transport, ou};
use critvar::path::{Control, TimeGrid};
use critvar::sde::{simulate, simulate_path, NoiseConfig};
use critvar::skeleton::forward_march;
use critvar::triple::{Space, SpectralTriple};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn eigenvalues() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-2..1e4_f64, 1..24).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

fn triple_and_vector() -> impl Strategy<Value = (SpectralTriple<f64>, Vec<f64>)> {
    eigenvalues().prop_flat_map(|eig| {
        let m = eig.len();
        (Just(SpectralTriple::new(eig).unwrap()), prop::collection::vec(-10.0..10.0_f64, m))
    })
}

proptest! {
    #[test]
    fn interpolation_ratio_is_at_most_one((t, v) in triple_and_vector(), beta in 0.5001..0.9999_f64) {
        prop_assume!(v.iter().any(|&x| x != 0.0));
        prop_assert!(t.interpolation_ratio(&v, beta).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn vbeta_near_half_is_h((t, v) in triple_and_vector()) {
        let h = t.norm(&v, Space::H).unwrap();
        let b = t.norm(&v, Space::VBeta(0.5 + 1e-6)).unwrap();
        prop_assert!((b - h).abs() <= 1e-4 * h);
    }

    #[test]
    fn duality_is_symmetric_and_bounded((t, v) in triple_and_vector(), seed in any::<u64>()) {
        let w: Vec<f64> = v.iter().enumerate().map(|(k, x)| x * ((seed >> (k % 64)) & 7) as f64 - 1.0).collect();
        let a = t.duality_pair(&w, &v).unwrap();
        prop_assert_eq!(a, t.duality_pair(&v, &w).unwrap());
        let h: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert_eq!(a, h);
        let bound = t.norm(&w, Space::VStar).unwrap() * t.norm(&v, Space::V).unwrap();
        prop_assert!(a.abs() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn norms_are_homogeneous_and_subadditive((t, v) in triple_and_vector(), c in -5.0..5.0_f64, beta in 0.51..0.99_f64) {
        let w: Vec<f64> = v.iter().rev().copied().collect();
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        for space in [Space::H, Space::V, Space::VStar, Space::VBeta(beta)] {
            let n = t.norm(&v, space).unwrap();
            prop_assert!((t.norm(&scaled, space).unwrap() - c.abs() * n).abs() <= 1e-12 * (1.0 + c.abs() * n));
            prop_assert!(t.norm(&sum, space).unwrap() <= (n + t.norm(&w, space).unwrap()) * (1.0 + 1e-12));
        }
    }

    /// `2β(1+ρ) = 2+ρ` is critical for every rational `ρ > 0`; nudging `β` by
    /// a small rational amount on either side flips the verdict.
    #[test]
    fn criticality_is_exact_at_equality(p in 1i64..50, q in 1i64..50, d in 1i64..1_000_000) {
        let rho = Rational::new(p, q);
        let two = Rational::from_integer(2);
        let beta = (two + rho) / (two * (Rational::from_integer(1) + rho));
        let nudge = Rational::new(1, d * 1_000);
        prop_assert_eq!(Exponent::new(rho, beta).classify().unwrap(), Criticality::Critical);
        if beta + nudge < Rational::from_integer(1) {
            prop_assert_eq!(classify_exponent(&rho, &(beta + nudge)).unwrap(), Criticality::Violated);
        }
        if beta - nudge > Rational::new(1, 2) {
            prop_assert_eq!(classify_exponent(&rho, &(beta - nudge)).unwrap(), Criticality::Subcritical);
        }
    }

    #[test]
    fn control_action_is_half_the_cell_sum(values in prop::collection::vec(-3.0..3.0_f64, 2..40), t_final in 0.1..5.0_f64) {
        let n = values.len() / 2;
        let grid = TimeGrid::new(t_final, n).unwrap();
        let psi = Control::from_values(grid, 2, values[..2 * n].to_vec()).unwrap();
        let sum: f64 = values[..2 * n].iter().map(|v| v * v).sum::<f64>() * t_final / n as f64;
        prop_assert!((psi.action() - 0.5 * sum).abs() <= 1e-12 * (1.0 + sum));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Scaling the noise by `√ε ≤ 1` can only raise the coercivity quotient.
    #[test]
    fn scaled_noise_never_lowers_theta(eps in 0.0..=1.0_f64, seed in any::<u64>(), b in 0.0..1.4_f64) {
        let (pair, triple) = heat1d_transport(1.0_f64, b, 0.5, 8).unwrap();
        let samples = draw_samples(&triple, 1.0, 1.0, 200, &mut ChaCha8Rng::seed_from_u64(seed));
        let full = probe_coercivity_ab_on(&pair, &triple, &samples, 1.0).unwrap();
        let scaled = probe_coercivity_ab_on(&pair, &triple, &samples, eps.sqrt()).unwrap();
        prop_assert!(scaled.theta_hat >= full.theta_hat);
        // the same check through the scaled-pair wrapper
        let wrapped = NoiseScaled { inner: &pair, scale: eps.sqrt() };
        let via = probe_coercivity_ab_on(&wrapped, &triple, &samples, 1.0).unwrap();
        prop_assert!((via.theta_hat - scaled.theta_hat).abs() <= 1e-10 * (1.0 + scaled.theta_hat.abs()));
    }

    #[test]
    fn lipschitz_probe_is_deterministic(seed in any::<u64>()) {
        let (pair, triple) = allen_cahn1d(16, 1.0_f64, 1.0, 1).unwrap();
        let a = probe_lipschitz(&pair, &triple, Coefficient::F, 1.0, 1.0, 64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = probe_lipschitz(&pair, &triple, Coefficient::F, 1.0, 1.0, 64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a.c_hat, b.c_hat);
        prop_assert_eq!(a.witness_v, b.witness_v);
    }

    /// Linear dynamics: the deviation from `u⁰` is `√ε` times a fixed path.
    #[test]
    fn ou_deviation_scales_as_sqrt_eps(e1 in 1e-4..1.0_f64, e2 in 1e-4..1.0_f64, seed in any::<u64>(), x in -2.0..2.0_f64) {
        let (pair, triple) = ou(1.3_f64, 0.7).unwrap();
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let u0 = forward_march(&pair, &Control::zeros(grid, 1), &[x]).unwrap();
        let noise = NoiseConfig { noise_dim: 1, seed };
        let (y1, _) = simulate_path(&pair, e1, &[x], grid, &noise, None, 3).unwrap();
        let (y2, _) = simulate_path(&pair, e2, &[x], grid, &noise, None, 3).unwrap();
        let d1 = y1.sup_h_distance(&triple, &u0);
        let d2 = y2.sup_h_distance(&triple, &u0);
        prop_assert!((d1 / e1.sqrt() - d2 / e2.sqrt()).abs() <= 1e-12 * (1.0 + d1 / e1.sqrt()));
    }

    #[test]
    fn batch_equals_single_paths(seed in any::<u64>(), eps in 0.01..0.5_f64) {
        let (pair, _) = allen_cahn1d(8, 1.0_f64, 1.0, 2).unwrap();
        let grid = TimeGrid::new(0.2, 20).unwrap();
        let x = vec![0.1; 8];
        let noise = NoiseConfig { noise_dim: 2, seed };
        let ens = simulate(&pair, eps, &x, grid, &noise, None, 5).unwrap();
        for p in 0..5 {
            let (single, _) = simulate_path(&pair, eps, &x, grid, &noise, None, p).unwrap();
            prop_assert_eq!(&single, &ens.trajectories[p]);
        }
        let again = simulate(&pair, eps, &x, grid, &noise, None, 5).unwrap();
        prop_assert_eq!(again.trajectories, ens.trajectories);
    }

    /// Growing an endpoint ball can only add hits on the same noise.
    #[test]
    fn hits_grow_with_the_ball(seed in any::<u64>(), r in 0.05..0.5_f64) {
        let (pair, _) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let noise = NoiseConfig { noise_dim: 1, seed };
        let small = TargetEvent::ball(vec![0.5], r).unwrap();
        let large = TargetEvent::ball(vec![0.5], 2.0 * r).unwrap();
        let a = hit_count(&pair, &small, 0.3, &[0.0], grid, &noise, 400).unwrap();
        let b = hit_count(&pair, &large, 0.3, &[0.0], grid, &noise, 400).unwrap();
        prop_assert!(a.hits <= b.hits);
    }
}
