//! Small-noise equation `dY = −A(t,Y)dt + √ε B(t,Y)dW` and its controlled
//! version `dX = [−A(t,X) + B(t,X)ψ]dt + √ε B(t,X)dW`, simulated with the
//! same semi-implicit scheme as the skeleton solver:
//!
//! ```text
//! (I + ΔtA₀(t_i,X_i)) X_{i+1} = X_i + Δt(F + f) + B(t_i,X_i)(ψ_iΔt + √ε ΔW_i)
//! ```
//!
//! The noise is truncated to the pair's `K_U` modes. Path `p` draws its
//! increments from ChaCha8 stream `p` of the run seed, so results do not
//! depend on batching or thread count, and ensemble reductions are summed
//! in path order.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientPair;
use crate::error::{check_dim, Error, Result};
use crate::path::{Control, MrAccumulator, TimeGrid, Trajectory};
use crate::rng::path_rng;
use crate::scalar::{dot, Scalar};
use crate::skeleton::Stepper;
use crate::stats::{mean_se, ols_line, wilson};
use crate::triple::SpectralTriple;

/// Paths whose `H`-norm reaches this value are flagged and stopped.
pub const OVERFLOW_GUARD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Number of retained noise modes `K_U`; must match the pair.
    pub noise_dim: usize,
    pub seed: u64,
}

/// Brownian increments `ΔW_i ~ N(0, Δt·I)` for one path, cell by cell.
pub fn brownian_increments<S: Scalar>(seed: u64, path: u64, grid: TimeGrid<S>, noise_dim: usize) -> Vec<S> {
    let mut rng = path_rng(seed, path);
    let sd = grid.dt().f64().sqrt();
    (0..grid.steps * noise_dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            S::c(z * sd)
        })
        .collect()
}

/// Sums consecutive blocks of `factor` cells.
pub fn coarsen_increments<S: Scalar>(dw: &[S], noise_dim: usize, factor: usize) -> Vec<S> {
    let cells = dw.len() / noise_dim;
    let mut out = vec![S::zero(); cells / factor * noise_dim];
    for c in 0..cells {
        for n in 0..noise_dim {
            out[(c / factor) * noise_dim + n] += dw[c * noise_dim + n];
        }
    }
    out
}

/// Receives the states of one path as they are produced.
pub trait PathObserver<S> {
    type Output;
    fn observe(&mut self, i: usize, t: S, state: &[S]);
    fn finish(self, blown_up: bool) -> Self::Output;
}

/// Runs one path with the given increments. Returns `true` when the path
/// hit the overflow guard (the observer then saw only the nodes before).
pub fn run_path<S: Scalar, O: PathObserver<S>>(
    pair: &dyn CoefficientPair<S>,
    eps: S,
    x: &[S],
    grid: TimeGrid<S>,
    control: Option<&Control<S>>,
    dw: &[S],
    obs: &mut O,
) -> bool {
    let m = pair.dim();
    let k = pair.noise_dim();
    let dt = grid.dt();
    let se = eps.sqrt();
    let guard = S::c(OVERFLOW_GUARD);
    let mut stepper = Stepper::new(pair);
    let mut u = x.to_vec();
    let mut next = vec![S::zero(); m];
    let mut incr = vec![S::zero(); k];
    obs.observe(0, S::zero(), &u);
    for i in 0..grid.steps {
        for n in 0..k {
            let drive = control.map_or(S::zero(), |c| c.cell(i)[n] * dt);
            incr[n] = drive + se * dw[i * k + n];
        }
        if stepper.step(i, grid.node(i), dt, &u, &incr, &mut next).is_err() {
            return true;
        }
        if !(dot(&next, &next).sqrt() < guard) {
            return true;
        }
        std::mem::swap(&mut u, &mut next);
        obs.observe(i + 1, grid.node(i + 1), &u);
    }
    false
}

fn check_inputs<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    eps: S,
    x: &[S],
    grid: TimeGrid<S>,
    noise: &NoiseConfig,
    control: Option<&Control<S>>,
) -> Result<()> {
    check_dim(pair.dim(), x.len())?;
    check_dim(pair.noise_dim(), noise.noise_dim)?;
    if noise.noise_dim == 0 {
        return Err(Error::InvalidParameter("need at least one noise mode".into()));
    }
    if !(eps >= S::zero()) {
        return Err(Error::InvalidParameter(format!("noise level must be nonnegative, got {eps}")));
    }
    if let Some(c) = control {
        check_dim(grid.steps, c.grid.steps)?;
        check_dim(noise.noise_dim, c.noise_dim)?;
    }
    Ok(())
}

/// Simulates `n_paths` paths in parallel, handing each to a fresh observer
/// from `make(path)`; outputs are returned in path order.
#[allow(clippy::too_many_arguments)]
pub fn simulate_map<S, O, F>(
    pair: &dyn CoefficientPair<S>,
    eps: S,
    x: &[S],
    grid: TimeGrid<S>,
    noise: &NoiseConfig,
    control: Option<&Control<S>>,
    n_paths: usize,
    make: F,
) -> Result<Vec<O::Output>>
where
    S: Scalar,
    O: PathObserver<S>,
    O::Output: Send,
    F: Fn(usize) -> O + Sync,
{
    check_inputs(pair, eps, x, grid, noise, control)?;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|p| {
            let dw = brownian_increments(noise.seed, p as u64, grid, noise.noise_dim);
            let mut obs = make(p);
            let blown = run_path(pair, eps, x, grid, control, &dw, &mut obs);
            obs.finish(blown)
        })
        .collect())
}

/// Stores the full path.
pub struct TrajectoryObserver<S> {
    traj: Trajectory<S>,
    filled: usize,
}

impl<S: Scalar> TrajectoryObserver<S> {
    pub fn new(grid: TimeGrid<S>, dim: usize) -> Self {
        Self { traj: Trajectory::zeros(grid, dim), filled: 0 }
    }
}

impl<S: Scalar> PathObserver<S> for TrajectoryObserver<S> {
    type Output = (Trajectory<S>, bool);
    fn observe(&mut self, i: usize, _t: S, state: &[S]) {
        self.traj.state_mut(i).copy_from_slice(state);
        self.filled = i + 1;
    }
    fn finish(mut self, blown_up: bool) -> Self::Output {
        if blown_up {
            // mark the unreached nodes as non-finite
            let d = self.traj.dim;
            self.traj.states[self.filled * d..].iter_mut().for_each(|x| *x = S::infinity());
        }
        (self.traj, blown_up)
    }
}

/// Streams `‖X‖_MR` and the final state.
pub struct MrObserver<'a, S> {
    triple: &'a SpectralTriple<S>,
    acc: MrAccumulator<S>,
    last: Vec<S>,
}

impl<'a, S: Scalar> MrObserver<'a, S> {
    pub fn new(triple: &'a SpectralTriple<S>, grid: TimeGrid<S>) -> Self {
        Self { triple, acc: MrAccumulator::new(grid.dt()), last: Vec::new() }
    }
}

/// Summary of one streamed path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary<S> {
    pub mr_norm: S,
    pub endpoint: Vec<S>,
    pub blown_up: bool,
}

impl<S: Scalar> PathObserver<S> for MrObserver<'_, S> {
    type Output = PathSummary<S>;
    fn observe(&mut self, _i: usize, _t: S, state: &[S]) {
        self.acc.push(self.triple, state);
        self.last.clear();
        self.last.extend_from_slice(state);
    }
    fn finish(self, blown_up: bool) -> Self::Output {
        let mr_norm = if blown_up { S::infinity() } else { self.acc.value() };
        PathSummary { mr_norm, endpoint: self.last, blown_up }
    }
}

/// Streams the distance of the path to a fixed reference trajectory.
pub struct DistanceObserver<'a, S> {
    triple: &'a SpectralTriple<S>,
    reference: &'a Trajectory<S>,
    acc: MrAccumulator<S>,
    sup_h: S,
    diff: Vec<S>,
}

impl<'a, S: Scalar> DistanceObserver<'a, S> {
    pub fn new(triple: &'a SpectralTriple<S>, reference: &'a Trajectory<S>) -> Self {
        Self {
            triple,
            reference,
            acc: MrAccumulator::new(reference.grid.dt()),
            sup_h: S::zero(),
            diff: vec![S::zero(); reference.dim],
        }
    }
}

/// `sup_t ‖X − u‖_H` and `‖X − u‖_MR` for one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDistance<S> {
    pub sup_h: S,
    pub mr: S,
    pub blown_up: bool,
}

impl<S: Scalar> PathObserver<S> for DistanceObserver<'_, S> {
    type Output = PathDistance<S>;
    fn observe(&mut self, i: usize, _t: S, state: &[S]) {
        for ((d, &a), &b) in self.diff.iter_mut().zip(state).zip(self.reference.state(i)) {
            *d = a - b;
        }
        self.sup_h = self.sup_h.max(self.triple.h(&self.diff));
        self.acc.push(self.triple, &self.diff);
    }
    fn finish(self, blown_up: bool) -> Self::Output {
        if blown_up {
            PathDistance { sup_h: S::infinity(), mr: S::infinity(), blown_up }
        } else {
            PathDistance { sup_h: self.sup_h, mr: self.acc.value(), blown_up }
        }
    }
}

/// An ensemble of stored paths with everything needed to regenerate their
/// noise.
#[derive(Debug, Clone)]
pub struct PathEnsemble<S> {
    pub eps: S,
    pub x: Vec<S>,
    pub grid: TimeGrid<S>,
    pub noise: NoiseConfig,
    pub control: Option<Control<S>>,
    pub trajectories: Vec<Trajectory<S>>,
    pub blown_up: Vec<bool>,
}

impl<S: Scalar> PathEnsemble<S> {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn n_blown_up(&self) -> usize {
        self.blown_up.iter().filter(|&&b| b).count()
    }

    pub fn increments(&self, path: usize) -> Vec<S> {
        brownian_increments(self.noise.seed, path as u64, self.grid, self.noise.noise_dim)
    }
}

/// Simulates and stores `n_paths` full paths.
#[allow(clippy::too_many_arguments)]
pub fn simulate<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    eps: S,
    x: &[S],
    grid: TimeGrid<S>,
    noise: &NoiseConfig,
    control: Option<&Control<S>>,
    n_paths: usize,
) -> Result<PathEnsemble<S>> {
    let m = pair.dim();
    let out = simulate_map(pair, eps, x, grid, noise, control, n_paths, |_| TrajectoryObserver::new(grid, m))?;
    let (trajectories, blown_up) = out.into_iter().unzip();
    Ok(PathEnsemble { eps, x: x.to_vec(), grid, noise: *noise, control: control.cloned(), trajectories, blown_up })
}

/// Simulates path `path` alone; identical to entry `path` of a batch run.
pub fn simulate_path<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    eps: S,
    x: &[S],
    grid: TimeGrid<S>,
    noise: &NoiseConfig,
    control: Option<&Control<S>>,
    path: usize,
) -> Result<(Trajectory<S>, bool)> {
    check_inputs(pair, eps, x, grid, noise, control)?;
    let dw = brownian_increments(noise.seed, path as u64, grid, noise.noise_dim);
    let mut obs = TrajectoryObserver::new(grid, pair.dim());
    let blown = run_path(pair, eps, x, grid, control, &dw, &mut obs);
    Ok(obs.finish(blown))
}

/// Discrete defects of the Itô formula for `‖X‖²_H` along one path:
/// `d_i = ‖X_i‖² − ‖x‖² − Σ_{j<i} [2⟨−A + Bψ_j, X_j⟩Δt + ε|||B|||²Δt
/// + 2√ε⟨X_j, BΔW_j⟩]`, all coefficients at `(t_j, X_j)`.
pub fn ito_defects<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    eps: S,
    traj: &Trajectory<S>,
    control: Option<&Control<S>>,
    dw: &[S],
) -> Vec<S> {
    let grid = traj.grid;
    let dt = grid.dt();
    let k = pair.noise_dim();
    let two = S::c(2.0);
    let se = eps.sqrt();
    let x = traj.state(0);
    let x2 = dot(x, x);
    let mut acc = S::zero();
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(S::zero());
    for i in 0..grid.steps {
        let t = grid.node(i);
        let u = traj.state(i);
        let a = pair.eval_a(t, u);
        let b = pair.eval_b(t, u);
        let mut drift = -dot(&a, u);
        if let Some(c) = control {
            drift += dot(&b.apply(c.cell(i)), u);
        }
        let mart = dot(&b.apply(&dw[i * k..(i + 1) * k]), u);
        acc += two * drift * dt + eps * b.hs_norm_sq() * dt + two * se * mart;
        let v = traj.state(i + 1);
        out.push(dot(v, v) - x2 - acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoReport {
    /// `max_p max_i |d_i|` over non-blown paths.
    pub max_abs_defect: f64,
    /// Mean and standard error of the terminal defect `d_N`.
    pub mean_terminal: f64,
    pub mean_terminal_se: f64,
    /// Root mean square of `max_i |d_i|` over paths.
    pub rms_max_defect: f64,
    pub paths: usize,
}

/// Itô-identity defects over an ensemble, regenerating each path's noise
/// from the recorded seed.
pub fn ito_identity_check<S: Scalar>(ensemble: &PathEnsemble<S>, pair: &dyn CoefficientPair<S>) -> ItoReport {
    let per_path: Vec<(f64, f64)> = (0..ensemble.len())
        .into_par_iter()
        .filter(|&p| !ensemble.blown_up[p])
        .map(|p| {
            let dw = ensemble.increments(p);
            let d = ito_defects(pair, ensemble.eps, &ensemble.trajectories[p], ensemble.control.as_ref(), &dw);
            let max = d.iter().map(|x| x.abs()).fold(S::zero(), S::max).f64();
            (max, d.last().copied().unwrap_or(S::zero()).f64())
        })
        .collect();
    let maxes: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let terminal: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let (mean_terminal, mean_terminal_se) = mean_se(&terminal);
    ItoReport {
        max_abs_defect: maxes.iter().copied().fold(0.0, f64::max),
        mean_terminal,
        mean_terminal_se,
        rms_max_defect: (maxes.iter().map(|x| x * x).sum::<f64>() / maxes.len().max(1) as f64).sqrt(),
        paths: per_path.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoOrderReport {
    pub steps: Vec<usize>,
    /// Root mean square over paths of `max_i |d_i|` per level.
    pub rms_defect: Vec<f64>,
    /// Fitted decay order of the defect in `Δt` and its standard error.
    pub order: f64,
    pub order_se: f64,
}

/// Decay of the Itô defect under `N`-doubling with nested Brownian paths:
/// level `l` uses `coarse.steps·2^l` steps and increments summed from the
/// finest level.
#[allow(clippy::too_many_arguments)]
pub fn ito_order<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    eps: S,
    x: &[S],
    coarse: TimeGrid<S>,
    levels: usize,
    seed: u64,
    n_paths: usize,
) -> Result<ItoOrderReport> {
    if levels < 2 {
        return Err(Error::InvalidParameter("need at least two refinement levels".into()));
    }
    check_dim(pair.dim(), x.len())?;
    let k = pair.noise_dim();
    let finest = TimeGrid { t_final: coarse.t_final, steps: coarse.steps << (levels - 1) };
    let grids: Vec<TimeGrid<S>> =
        (0..levels).map(|l| TimeGrid { t_final: coarse.t_final, steps: coarse.steps << l }).collect();
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let fine = brownian_increments(seed, p as u64, finest, k);
            grids
                .iter()
                .map(|&g| {
                    let dw = coarsen_increments(&fine, k, finest.steps / g.steps);
                    let mut obs = TrajectoryObserver::new(g, pair.dim());
                    if run_path(pair, eps, x, g, None, &dw, &mut obs) {
                        return f64::NAN;
                    }
                    let (traj, _) = obs.finish(false);
                    ito_defects(pair, eps, &traj, None, &dw).iter().map(|d| d.abs()).fold(S::zero(), S::max).f64()
                })
                .collect()
        })
        .collect();
    let rms_defect: Vec<f64> = (0..levels)
        .map(|l| {
            let v: Vec<f64> = per_path.iter().map(|p| p[l]).filter(|x| x.is_finite()).collect();
            (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt()
        })
        .collect();
    let lx: Vec<f64> = grids.iter().map(|g| g.dt().f64().ln()).collect();
    let ly: Vec<f64> = rms_defect.iter().map(|r| r.ln()).collect();
    let fit = ols_line(&lx, &ly).ok_or_else(|| Error::Nonconvergence("degenerate order fit".into()))?;
    Ok(ItoOrderReport {
        steps: grids.iter().map(|g| g.steps).collect(),
        rms_defect,
        order: fit.slope,
        order_se: fit.slope_se,
    })
}

/// `C = 4/(1∧2θ) · exp(2MT + 4K²) · (‖x‖²_H + 2‖φ‖²_{L²})` of the uniform
/// tightness bound `P(‖X^ε‖_MR > γ) ≤ C/γ²` for controls with
/// `‖ψ‖_{L²} ≤ K` and `ε < ½`.
pub fn tightness_constant<S: Scalar>(pair: &dyn CoefficientPair<S>, x: &[S], k: S, t_final: S) -> S {
    let c = pair.coercivity();
    let lo = S::one().min(S::c(2.0) * c.theta);
    S::c(4.0) / lo
        * (S::c(2.0) * c.m * t_final + S::c(4.0) * k * k).exp()
        * (dot(x, x) + S::c(2.0) * c.phi.l2_sq(t_final))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub gamma: f64,
    pub exceed: u64,
    pub n: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `C/γ²`.
    pub envelope: f64,
    /// The upper Wilson bound lies below the envelope.
    pub respected: bool,
}

/// Exceedance table `P̂(‖X‖_MR > γ)` with 95% Wilson intervals against `C/γ²`.
pub fn tightness_from_norms(mr_norms: &[f64], gammas: &[f64], c: f64) -> Vec<TightnessRow> {
    let n = mr_norms.len() as u64;
    gammas
        .iter()
        .map(|&gamma| {
            let exceed = mr_norms.iter().filter(|&&r| !(r <= gamma)).count() as u64;
            let (ci_low, ci_high) = wilson(exceed, n, 1.96);
            let envelope = c / (gamma * gamma);
            TightnessRow {
                gamma,
                exceed,
                n,
                p_hat: if n == 0 { 0.0 } else { exceed as f64 / n as f64 },
                ci_low,
                ci_high,
                envelope,
                respected: ci_high <= envelope,
            }
        })
        .collect()
}

/// Tightness table for a stored ensemble.
pub fn tightness_probe<S: Scalar>(
    ensemble: &PathEnsemble<S>,
    triple: &SpectralTriple<S>,
    gammas: &[f64],
    c: f64,
) -> Vec<TightnessRow> {
    let norms: Vec<f64> = ensemble
        .trajectories
        .iter()
        .zip(&ensemble.blown_up)
        .map(|(t, &b)| if b { f64::INFINITY } else { t.mr_norm(triple).f64() })
        .collect();
    tightness_from_norms(&norms, gammas, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ou;
    use crate::skeleton::forward_march;

    #[test]
    fn batch_equals_single_paths_and_is_reproducible() {
        let (pair, _) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let noise = NoiseConfig { noise_dim: 1, seed: 11 };
        let e = simulate(&pair, 0.1, &[0.5], grid, &noise, None, 8).unwrap();
        let e2 = simulate(&pair, 0.1, &[0.5], grid, &noise, None, 8).unwrap();
        assert_eq!(e.trajectories, e2.trajectories);
        for p in [0, 3, 7] {
            let (t, _) = simulate_path(&pair, 0.1, &[0.5], grid, &noise, None, p).unwrap();
            assert_eq!(t, e.trajectories[p]);
        }
    }

    #[test]
    fn zero_noise_with_control_is_the_skeleton_scheme() {
        let (pair, _) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let psi = Control::constant(grid, &[0.7]);
        let noise = NoiseConfig { noise_dim: 1, seed: 1 };
        let e = simulate(&pair, 0.0, &[0.5], grid, &noise, Some(&psi), 2).unwrap();
        let u = forward_march(&pair, &psi, &[0.5]).unwrap();
        assert_eq!(e.trajectories[1], u);
    }

    #[test]
    fn nested_increments_sum() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let dw: Vec<f64> = brownian_increments(5, 0, grid, 2);
        let c = coarsen_increments(&dw, 2, 4);
        assert_eq!(c.len(), 4);
        assert!((c[1] - (dw[1] + dw[3] + dw[5] + dw[7])).abs() < 1e-15);
    }

    #[test]
    fn tightness_table_limits() {
        let rows = tightness_from_norms(&[0.1, 0.2, 5.0], &[1.0, 1e8], 1.0);
        assert_eq!(rows[0].exceed, 1);
        assert_eq!(rows[1].exceed, 0);
        assert_eq!(rows[1].p_hat, 0.0);
    }
}
