//! Skeleton equation `u' = −A(t,u) + B(t,u)ψ`, `u(0) = x`.
//!
//! The solver follows the linearize-and-iterate construction. On a window
//! starting at `t_a` with state `v₀ = u(t_a)`, the map `Ψ_{v₀}` sends a path
//! `v` to the solution `u` of the linear problem
//!
//! ```text
//! u' + A₀(t,v₀)u − B₀(t,v₀)uψ = f̃(v) + g̃(v)ψ
//! f̃(v) = (A₀(t,v₀) − A₀(t,v))v + F(t,v) + f(t)
//! g̃(v) = (B₀(t,v) − B₀(t,v₀))v + G(t,v) + g(t)
//! ```
//!
//! discretized by the semi-implicit step
//! `(I + Δt A₀)u_{i+1} = u_i + Δt(B₀u_iψ_i + f̃_i + g̃_iψ_i)`. Iteration starts
//! from the linear flow `z_{v₀}` and stops when successive iterates agree to
//! `tol` in the MR norm. Windows start as the whole interval, are halved
//! whenever a measured contraction ratio exceeds the limit, and grow back
//! after each accepted window.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientPair;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{ColumnOperators, NoiseMatrix, Operator, ShiftedSolver};
use crate::path::{Control, TimeGrid, Trajectory};
use crate::scalar::{axpy, dot, Scalar};
use crate::triple::SpectralTriple;

/// One semi-implicit step of the full nonlinear scheme
/// `(I + ΔtA₀(t,u))u⁺ = u + Δt(F(t,u) + f(t)) + B(t,u)·incr`,
/// where `incr` is `ψΔt` for the skeleton and `ψΔt + √ε ΔW` for the SDE.
pub(crate) struct Stepper<'a, S> {
    pair: &'a dyn CoefficientPair<S>,
    tmp: Vec<S>,
    noise: NoiseMatrix<S>,
    cached: Option<(S, ShiftedSolver<S>)>,
}

impl<'a, S: Scalar> Stepper<'a, S> {
    pub(crate) fn new(pair: &'a dyn CoefficientPair<S>) -> Self {
        let m = pair.dim();
        Self { pair, tmp: vec![S::zero(); m], noise: NoiseMatrix::zeros(m, pair.noise_dim()), cached: None }
    }

    /// Adds `B(t,u)·incr` to `out`.
    pub(crate) fn add_noise_term(&mut self, t: S, u: &[S], incr: &[S], out: &mut [S]) {
        self.pair.b0(t, u).add_apply_combined(S::one(), incr, u, out);
        self.add_lower_noise(t, u, incr, out);
    }

    /// Adds `(G(t,u) + g(t))·incr` to `out`.
    pub(crate) fn add_lower_noise(&mut self, t: S, u: &[S], incr: &[S], out: &mut [S]) {
        let pair = self.pair;
        if pair.has_state_noise() {
            pair.noise(t, u, &mut self.noise);
            self.noise.add_apply(S::one(), incr, out);
        }
        pair.additive_noise(t, &mut self.noise);
        self.noise.add_apply(S::one(), incr, out);
    }

    /// Writes `u + Δt(F + f)` into `out`.
    pub(crate) fn explicit_drift(&mut self, t: S, dt: S, u: &[S], out: &mut [S]) {
        out.copy_from_slice(u);
        if self.pair.has_drift() {
            self.pair.drift(t, u, &mut self.tmp);
            axpy(dt, &self.tmp, out);
        }
        self.pair.forcing(t, &mut self.tmp);
        axpy(dt, &self.tmp, out);
    }

    /// Solves `(I + ΔtA₀(t,u)) y = out` in place.
    pub(crate) fn implicit_solve(&mut self, step: usize, t: S, dt: S, u: &[S], out: &mut [S]) -> Result<()> {
        let singular = || Error::LinearSolve { step, reason: "I + Δt·A₀ is singular".into() };
        if self.pair.autonomous() {
            if !matches!(&self.cached, Some((h, _)) if *h == dt) {
                let solver = self.pair.a0(t, u).shifted(dt).ok_or_else(singular)?;
                self.cached = Some((dt, solver));
            }
            if let Some((_, solver)) = &self.cached {
                solver.solve_in_place(out);
            }
        } else {
            self.pair.a0(t, u).shifted(dt).ok_or_else(singular)?.solve_in_place(out);
        }
        Ok(())
    }

    pub(crate) fn step(&mut self, step: usize, t: S, dt: S, u: &[S], incr: &[S], out: &mut [S]) -> Result<()> {
        self.explicit_drift(t, dt, u, out);
        self.add_noise_term(t, u, incr, out);
        self.implicit_solve(step, t, dt, u, out)?;
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::LinearSolve { step, reason: "non-finite state".into() });
        }
        Ok(())
    }
}

/// Runs the nonlinear semi-implicit scheme with control `ψ`. For pairs with
/// `A₀`, `B₀` independent of `u` this is exactly the fixed point that
/// [`solve_skeleton`] converges to.
pub fn forward_march<S: Scalar>(pair: &dyn CoefficientPair<S>, psi: &Control<S>, x: &[S]) -> Result<Trajectory<S>> {
    check_dim(pair.dim(), x.len())?;
    check_dim(pair.noise_dim(), psi.noise_dim)?;
    let grid = psi.grid;
    let dt = grid.dt();
    let m = pair.dim();
    let mut traj = Trajectory::zeros(grid, m);
    traj.state_mut(0).copy_from_slice(x);
    let mut stepper = Stepper::new(pair);
    let mut incr = vec![S::zero(); psi.noise_dim];
    for i in 0..grid.steps {
        for (d, &p) in incr.iter_mut().zip(psi.cell(i)) {
            *d = p * dt;
        }
        let (head, tail) = traj.states.split_at_mut((i + 1) * m);
        stepper.step(i, grid.node(i), dt, &head[i * m..], &incr, &mut tail[..m])?;
    }
    Ok(traj)
}

/// Semi-implicit solve of the linear equation
/// `u' + A₀(t,w)u − B₀(t,w)uψ = f̄ + ḡψ`, `u(0) = x`, with the coefficients
/// evaluated along the given path `w`. `fbar` holds `f̄` at the nodes,
/// `gbar` one noise matrix per cell; `None` means zero.
pub fn solve_linearized<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    w: &Trajectory<S>,
    psi: &Control<S>,
    fbar: Option<&Trajectory<S>>,
    gbar: Option<&[NoiseMatrix<S>]>,
    x: &[S],
) -> Result<Trajectory<S>> {
    let m = pair.dim();
    check_dim(m, x.len())?;
    check_dim(psi.grid.steps, w.grid.steps)?;
    if let Some(f) = fbar {
        check_dim(w.states.len(), f.states.len())?;
    }
    if let Some(g) = gbar {
        check_dim(psi.grid.steps, g.len())?;
    }
    let grid = psi.grid;
    let dt = grid.dt();
    let mut traj = Trajectory::zeros(grid, m);
    traj.state_mut(0).copy_from_slice(x);
    for i in 0..grid.steps {
        let t = grid.node(i);
        let (head, tail) = traj.states.split_at_mut((i + 1) * m);
        let u = &head[i * m..];
        let out = &mut tail[..m];
        out.copy_from_slice(u);
        let wi = w.state(i);
        pair.b0(t, wi).add_apply_combined(dt, psi.cell(i), u, out);
        if let Some(f) = fbar {
            axpy(dt, f.state(i), out);
        }
        if let Some(g) = gbar {
            g[i].add_apply(dt, psi.cell(i), out);
        }
        let solver = pair
            .a0(t, wi)
            .shifted(dt)
            .ok_or_else(|| Error::LinearSolve { step: i, reason: "I + Δt·A₀ is singular".into() })?;
        solver.solve_in_place(out);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct SkeletonConfig<S> {
    /// Stop when successive iterates differ by at most `tol` in MR norm.
    pub tol: S,
    /// Budget of accepted plus rejected windows.
    pub max_windows: usize,
    /// Iterations allowed per window before it is halved.
    pub max_iterations: usize,
    /// Largest acceptable ratio of successive differences.
    pub contraction_limit: S,
}

impl<S: Scalar> Default for SkeletonConfig<S> {
    fn default() -> Self {
        Self { tol: S::c(1e-10), max_windows: 4096, max_iterations: 200, contraction_limit: S::c(0.5) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport<S> {
    /// First and last node of the window.
    pub start: usize,
    pub end: usize,
    pub iterations: usize,
    /// `‖v_{k+1} − v_k‖_MR` for each iteration.
    pub differences: Vec<S>,
    /// Ratios of successive differences.
    pub ratios: Vec<S>,
}

impl<S: Scalar> WindowReport<S> {
    /// Largest measured ratio, zero when none was measured.
    pub fn contraction_factor(&self) -> S {
        self.ratios.iter().copied().fold(S::zero(), S::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonReport<S> {
    pub windows: Vec<WindowReport<S>>,
    pub rejected_windows: usize,
}

impl<S: Scalar> SkeletonReport<S> {
    pub fn max_contraction_factor(&self) -> S {
        self.windows.iter().map(|w| w.contraction_factor()).fold(S::zero(), S::max)
    }

    pub fn total_iterations(&self) -> usize {
        self.windows.iter().map(|w| w.iterations).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SkeletonSolution<S> {
    pub trajectory: Trajectory<S>,
    pub report: SkeletonReport<S>,
}

/// The map `Ψ_{v₀}` on nodes `a..=b` of the control grid.
pub struct FixedPointMap<'a, S> {
    pair: &'a dyn CoefficientPair<S>,
    psi: &'a Control<S>,
    a: usize,
    b: usize,
    v0: Vec<S>,
}

impl<'a, S: Scalar> FixedPointMap<'a, S> {
    pub fn new(pair: &'a dyn CoefficientPair<S>, psi: &'a Control<S>, a: usize, b: usize, v0: &[S]) -> Self {
        Self { pair, psi, a, b, v0: v0.to_vec() }
    }

    fn frozen(&self, t: S) -> (Cow<'a, Operator<S>>, Cow<'a, ColumnOperators<S>>) {
        (self.pair.a0(t, &self.v0), self.pair.b0(t, &self.v0))
    }

    fn march(&self, v: Option<&Trajectory<S>>) -> Result<Trajectory<S>> {
        let pair = self.pair;
        let m = pair.dim();
        let grid = self.psi.grid;
        let dt = grid.dt();
        let local = TimeGrid { t_final: grid.node(self.b) - grid.node(self.a), steps: self.b - self.a };
        let mut out = Trajectory::zeros(local, m);
        out.state_mut(0).copy_from_slice(&self.v0);
        let mut stepper = Stepper::new(pair);
        let mut incr = vec![S::zero(); self.psi.noise_dim];
        let mut scratch = vec![S::zero(); m];
        let quasilinear = !pair.is_semilinear();
        for (j, i) in (self.a..self.b).enumerate() {
            let t = grid.node(i);
            let psi_i = self.psi.cell(i);
            let (a0, b0) = self.frozen(t);
            let (head, tail) = out.states.split_at_mut((j + 1) * m);
            let u = &head[j * m..];
            let next = &mut tail[..m];
            next.copy_from_slice(u);
            b0.add_apply_combined(dt, psi_i, u, next);
            if let Some(v) = v {
                let vi = v.state(j);
                for (d, &p) in incr.iter_mut().zip(psi_i) {
                    *d = p * dt;
                }
                // F(v) + f and G(v)ψ + gψ
                stepper.explicit_drift(t, dt, vi, &mut scratch);
                axpy(-S::one(), vi, &mut scratch);
                axpy(S::one(), &scratch, next);
                stepper.add_lower_noise(t, vi, &incr, next);
                if quasilinear {
                    a0.add_apply(dt, vi, next);
                    pair.a0(t, vi).add_apply(-dt, vi, next);
                    pair.b0(t, vi).add_apply_combined(dt, psi_i, vi, next);
                    b0.add_apply_combined(-dt, psi_i, vi, next);
                }
            }
            let solver = a0
                .shifted(dt)
                .ok_or_else(|| Error::LinearSolve { step: i, reason: "I + Δt·A₀ is singular".into() })?;
            solver.solve_in_place(next);
        }
        Ok(out)
    }

    /// `z_{v₀}`: the homogeneous linear flow from `v₀`.
    pub fn seed(&self) -> Result<Trajectory<S>> {
        self.march(None)
    }

    /// `Ψ_{v₀}(v)` for a path `v` on the window nodes.
    pub fn apply(&self, v: &Trajectory<S>) -> Result<Trajectory<S>> {
        check_dim(self.b - self.a + 1, v.len())?;
        self.march(Some(v))
    }
}

enum WindowOutcome<S> {
    Accepted(Trajectory<S>, WindowReport<S>),
    Rejected,
}

fn try_window<S: Scalar>(
    triple: &SpectralTriple<S>,
    map: &FixedPointMap<'_, S>,
    cfg: &SkeletonConfig<S>,
) -> Result<WindowOutcome<S>> {
    let mut v = match map.seed() {
        Ok(v) => v,
        Err(Error::LinearSolve { .. }) => return Ok(WindowOutcome::Rejected),
        Err(e) => return Err(e),
    };
    let mut differences = Vec::new();
    let mut ratios = Vec::new();
    for k in 1..=cfg.max_iterations {
        let u = match map.apply(&v) {
            Ok(u) => u,
            Err(Error::LinearSolve { .. }) => return Ok(WindowOutcome::Rejected),
            Err(e) => return Err(e),
        };
        let d = u.mr_distance(triple, &v);
        if !d.is_finite() || u.states.iter().any(|x| !x.is_finite()) {
            return Ok(WindowOutcome::Rejected);
        }
        if let Some(&prev) = differences.last() {
            if prev > cfg.tol {
                let r = d / prev;
                ratios.push(r);
                if r > cfg.contraction_limit {
                    return Ok(WindowOutcome::Rejected);
                }
            }
        }
        differences.push(d);
        v = u;
        if d <= cfg.tol {
            let report = WindowReport { start: map.a, end: map.b, iterations: k, differences, ratios };
            return Ok(WindowOutcome::Accepted(v, report));
        }
    }
    Ok(WindowOutcome::Rejected)
}

/// Solves the skeleton equation by the windowed fixed-point iteration.
pub fn solve_skeleton<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    x: &[S],
    cfg: &SkeletonConfig<S>,
) -> Result<SkeletonSolution<S>> {
    let m = pair.dim();
    check_dim(m, x.len())?;
    check_dim(triple.dim(), m)?;
    check_dim(pair.noise_dim(), psi.noise_dim)?;
    if !(cfg.tol > S::zero()) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let grid = psi.grid;
    let n = grid.steps;
    let mut traj = Trajectory::zeros(grid, m);
    traj.state_mut(0).copy_from_slice(x);
    let mut report = SkeletonReport { windows: Vec::new(), rejected_windows: 0 };
    let mut a = 0;
    let mut len = n;
    let mut budget = cfg.max_windows;
    while a < n {
        if budget == 0 {
            return Err(Error::Nonconvergence(format!(
                "window budget of {} exhausted at t = {}",
                cfg.max_windows,
                grid.node(a)
            )));
        }
        budget -= 1;
        let b = (a + len).min(n);
        let map = FixedPointMap::new(pair, psi, a, b, traj.state(a));
        match try_window(triple, &map, cfg)? {
            WindowOutcome::Accepted(win, wr) => {
                traj.states[a * m..(b + 1) * m].copy_from_slice(&win.states);
                report.windows.push(wr);
                a = b;
                len = (2 * len).min(n);
            }
            WindowOutcome::Rejected => {
                report.rejected_windows += 1;
                if b - a <= 1 {
                    return Err(Error::ContractionFailure { time: grid.node(a).f64() });
                }
                len = (b - a) / 2;
            }
        }
    }
    Ok(SkeletonSolution { trajectory: traj, report })
}

/// Applies `Ψ_{v₀}` once more on each accepted window and returns the MR
/// distance between the result and the solution.
pub fn fixed_point_defect<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    sol: &SkeletonSolution<S>,
) -> Result<S> {
    let traj = &sol.trajectory;
    let mut pushed = traj.clone();
    for w in &sol.report.windows {
        let map = FixedPointMap::new(pair, psi, w.start, w.end, traj.state(w.start));
        let u = map.apply(&traj.window(w.start, w.end))?;
        pushed.states[w.start * traj.dim..(w.end + 1) * traj.dim].copy_from_slice(&u.states);
    }
    Ok(pushed.mr_distance(triple, traj))
}

/// `-A(t,u) + B(t,u)ψ` at node `i` with cell control `ψ`.
fn rhs<S: Scalar>(pair: &dyn CoefficientPair<S>, t: S, u: &[S], psi: &[S]) -> Vec<S> {
    let mut r = pair.eval_a(t, u);
    r.iter_mut().for_each(|x| *x = -*x);
    pair.eval_b(t, u).add_apply(S::one(), psi, &mut r);
    r
}

/// `max_i ‖u(t_i) − x − Σ trapz(−A + Bψ)‖_{V*}`, the defect of the integral
/// form of the equation; first order in `Δt` for the semi-implicit scheme.
pub fn residual<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    traj: &Trajectory<S>,
) -> Result<S> {
    check_dim(psi.grid.steps, traj.grid.steps)?;
    let grid = traj.grid;
    let half = grid.dt() * S::c(0.5);
    let mut integral = vec![S::zero(); traj.dim];
    let x = traj.state(0);
    let mut worst = S::zero();
    for i in 0..grid.steps {
        let p = psi.cell(i);
        let r0 = rhs(pair, grid.node(i), traj.state(i), p);
        let r1 = rhs(pair, grid.node(i + 1), traj.state(i + 1), p);
        axpy(half, &r0, &mut integral);
        axpy(half, &r1, &mut integral);
        let defect: Vec<S> =
            traj.state(i + 1).iter().zip(x).zip(&integral).map(|((&u, &x0), &q)| u - x0 - q).collect();
        worst = worst.max(triple.vstar(&defect));
    }
    Ok(worst)
}

/// `max_i |‖u(t_i)‖² − ‖x‖² − 2 Σ trapz⟨−A + Bψ, u⟩|`.
pub fn chain_rule_defect<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    traj: &Trajectory<S>,
) -> Result<S> {
    check_dim(psi.grid.steps, traj.grid.steps)?;
    let grid = traj.grid;
    let half = grid.dt() * S::c(0.5);
    let x = traj.state(0);
    let x2 = dot(x, x);
    let mut integral = S::zero();
    let mut worst = S::zero();
    for i in 0..grid.steps {
        let p = psi.cell(i);
        let (u0, u1) = (traj.state(i), traj.state(i + 1));
        integral += half * (dot(&rhs(pair, grid.node(i), u0, p), u0) + dot(&rhs(pair, grid.node(i + 1), u1, p), u1));
        let d = dot(u1, u1) - x2 - S::c(2.0) * integral;
        worst = worst.max(d.abs());
    }
    Ok(worst)
}

/// Right side of the a priori estimate
/// `‖u‖_MR ≤ (2 + 1/θ)^{1/2}(‖x‖_H + √2‖φ‖_{L²}) exp[MT + ½‖ψ‖²_{L²}]`.
pub fn global_bound<S: Scalar>(pair: &dyn CoefficientPair<S>, psi: &Control<S>, x: &[S]) -> S {
    let c = pair.coercivity();
    let t = psi.grid.t_final;
    let xh = dot(x, x).sqrt();
    let phi = c.phi.l2_sq(t).sqrt();
    (S::c(2.0) + c.theta.recip()).sqrt()
        * (xh + S::c(2.0).sqrt() * phi)
        * (c.m * t + S::c(0.5) * psi.l2_sq()).exp()
}

/// `global_bound − ‖u‖_MR`; a negative margin is a finding, not an error.
pub fn verify_global_bound<S: Scalar>(
    triple: &SpectralTriple<S>,
    traj: &Trajectory<S>,
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    x: &[S],
) -> S {
    global_bound(pair, psi, x) - traj.mr_norm(triple)
}

/// `‖u_x − u_{x'}‖_MR / ‖x − x'‖_H`.
pub fn continuous_dependence_probe<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    x: &[S],
    x2: &[S],
    cfg: &SkeletonConfig<S>,
) -> Result<S> {
    check_dim(x.len(), x2.len())?;
    let dx = triple.h(&crate::scalar::sub(x, x2));
    if dx == S::zero() {
        return Err(Error::InvalidParameter("perturbed initial datum equals the original".into()));
    }
    let u = solve_skeleton(triple, pair, psi, x, cfg)?.trajectory;
    let v = solve_skeleton(triple, pair, psi, x2, cfg)?.trajectory;
    Ok(u.mr_distance(triple, &v) / dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{Coercivity, Phi};
    use crate::models::{allen_cahn1d, ou};

    /// `u' = −a u + F(u) + b u ψ` on `ℝ`.
    struct Scalar1 {
        a: Operator<f64>,
        b: ColumnOperators<f64>,
        quad: f64,
    }

    impl Scalar1 {
        fn new(a: f64, b: f64, quad: f64) -> Self {
            Self { a: Operator::Diagonal(vec![a]), b: ColumnOperators { ops: vec![Operator::Diagonal(vec![b])] }, quad }
        }
    }

    impl CoefficientPair<f64> for Scalar1 {
        fn name(&self) -> &str {
            "scalar"
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
        fn is_semilinear(&self) -> bool {
            true
        }
        fn drift(&self, _t: f64, v: &[f64], out: &mut [f64]) {
            out[0] = self.quad * v[0] * v[0];
        }
        fn coercivity(&self) -> Coercivity<f64> {
            Coercivity { theta: 1.0, m: 0.0, phi: Phi::Constant(0.0) }
        }
    }

    fn triple1() -> SpectralTriple<f64> {
        SpectralTriple::new(vec![1.0]).unwrap()
    }

    #[test]
    fn linearized_heat_matches_geometric_recursion() {
        let (pair, triple) = allen_cahn1d::<f64>(32, 0.0, 0.0, 1).unwrap();
        let grid = TimeGrid::new(0.1, 100).unwrap();
        let psi = Control::zeros(grid, 1);
        let mut x = vec![0.0; 32];
        x[0] = 1.0;
        let w = Trajectory::zeros(grid, 32);
        let u = solve_linearized(&pair, &w, &psi, None, None, &x).unwrap();
        let l1 = triple.eigenvalues()[0];
        for i in 0..=100 {
            let exact = (1.0 + grid.dt() * l1).powi(-(i as i32));
            assert!((u.state(i)[0] - exact).abs() <= 1e-12 * exact.max(1e-300));
            let cont = (-l1 * grid.node(i)).exp();
            assert!((u.state(i)[0] - cont).abs() <= 5.0 * grid.dt() * l1 * 0.1 * cont);
        }
        let zero = solve_linearized(&pair, &w, &psi, None, None, &vec![0.0; 32]).unwrap();
        assert!(zero.states.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_bilinear_control() {
        let pair = Scalar1::new(1.0, 0.5, 0.0);
        let grid = TimeGrid::new(1.0, 10_000).unwrap();
        let psi = Control::constant(grid, &[0.5]);
        let w = Trajectory::zeros(grid, 1);
        let u = solve_linearized(&pair, &w, &psi, None, None, &[1.0]).unwrap();
        let exact = (-1.0f64 + 0.25).exp();
        assert!((u.last()[0] - exact).abs() / exact <= 1e-3);
    }

    #[test]
    fn linear_pair_converges_in_one_iteration() {
        let (pair, triple) = ou(1.0, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let psi = Control::zeros(grid, 1);
        let sol = solve_skeleton(&triple, &pair, &psi, &[1.0], &SkeletonConfig::default()).unwrap();
        assert_eq!(sol.report.windows.len(), 1);
        assert_eq!(sol.report.windows[0].iterations, 1);
        let w = Trajectory::zeros(grid, 1);
        let lin = solve_linearized(&pair, &w, &psi, None, None, &[1.0]).unwrap();
        assert!(sol.trajectory.sup_h_distance(&triple, &lin) < 1e-14);
    }

    #[test]
    fn logistic_matches_rk4_reference() {
        // u' = −u + u², u(0) = 0.1
        let pair = Scalar1::new(1.0, 0.0, 1.0);
        let triple = triple1();
        let grid = TimeGrid::new(1.0, 20_000).unwrap();
        let psi = Control::zeros(grid, 1);
        let sol = solve_skeleton(&triple, &pair, &psi, &[0.1], &SkeletonConfig::default()).unwrap();
        let f = |u: f64| -u + u * u;
        let (mut u, h) = (0.1f64, 1e-4);
        for _ in 0..10_000 {
            let k1 = f(u);
            let k2 = f(u + 0.5 * h * k1);
            let k3 = f(u + 0.5 * h * k2);
            let k4 = f(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((sol.trajectory.last()[0] - u).abs() <= 1e-3);
        assert!(sol.report.max_contraction_factor() <= 0.5);
        let march = forward_march(&pair, &psi, &[0.1]).unwrap();
        assert!(sol.trajectory.sup_h_distance(&triple, &march) < 1e-9);
    }

    #[test]
    fn allen_cahn_contracts_and_certifies() {
        let (pair, triple) = allen_cahn1d::<f64>(16, 1.0, 0.5, 2).unwrap();
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let psi = Control::constant(grid, &[1.0, -0.5]);
        let mut x = vec![0.0; 16];
        x[0] = 0.1;
        x[2] = 0.05;
        let cfg = SkeletonConfig::default();
        let sol = solve_skeleton(&triple, &pair, &psi, &x, &cfg).unwrap();
        assert!(sol.report.max_contraction_factor() <= 0.5);
        assert!(sol.report.windows.iter().all(|w| w.iterations >= 1));
        assert!(fixed_point_defect(&triple, &pair, &psi, &sol).unwrap() <= 2.0 * cfg.tol);
        assert!(verify_global_bound(&triple, &sol.trajectory, &pair, &psi, &x) >= 0.0);
    }

    #[test]
    fn trivial_certificates() {
        let (pair, triple) = allen_cahn1d::<f64>(8, 1.0, 0.0, 1).unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let psi = Control::zeros(grid, 1);
        let x = vec![0.0; 8];
        let sol = solve_skeleton(&triple, &pair, &psi, &x, &SkeletonConfig::default()).unwrap();
        assert_eq!(sol.trajectory.mr_norm(&triple), 0.0);
        assert_eq!(verify_global_bound(&triple, &sol.trajectory, &pair, &psi, &x), 0.0);
        assert_eq!(residual(&triple, &pair, &psi, &sol.trajectory).unwrap(), 0.0);
        assert!(continuous_dependence_probe(&triple, &pair, &psi, &x, &x, &SkeletonConfig::default()).is_err());
    }
}
