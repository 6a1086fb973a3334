//! Rate function `I(z) = ½ inf{‖ψ‖²_{L²} : u^ψ = z}` (with `inf ∅ = +∞`),
//! evaluated along given controls and minimized over events by a
//! penalized minimum action method.
//!
//! Controls are piecewise constant on the solver grid. The forward map is
//! the semi-implicit scheme of [`forward_march`]; gradients come from its
//! discrete adjoint, so they are exact for the discrete problem.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientPair;
use crate::error::{check_dim, Error, Result};
use crate::linalg::NoiseMatrix;
use crate::optim::{lbfgs, LbfgsConfig, OptimTrace};
use crate::path::{Control, TimeGrid, Trajectory};
use crate::rng::substream;
use crate::scalar::{axpy, dot, Scalar};
use crate::skeleton::{forward_march, global_bound, solve_skeleton, SkeletonConfig};
use crate::triple::SpectralTriple;

/// A real functional of a whole path.
pub trait PathFunctional<S>: Send + Sync {
    fn value(&self, traj: &Trajectory<S>) -> S;

    /// `∂value/∂u(t_i)` at every node; `None` selects finite differences.
    fn gradient(&self, _traj: &Trajectory<S>) -> Option<Trajectory<S>> {
        None
    }
}

/// `h(z) = c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantFunctional<S>(pub S);

impl<S: Scalar> PathFunctional<S> for ConstantFunctional<S> {
    fn value(&self, _traj: &Trajectory<S>) -> S {
        self.0
    }
    fn gradient(&self, traj: &Trajectory<S>) -> Option<Trajectory<S>> {
        Some(Trajectory::zeros(traj.grid, traj.dim))
    }
}

/// `h(z) = ⟨d, z(T)⟩`.
#[derive(Debug, Clone)]
pub struct LinearEndpoint<S>(pub Vec<S>);

impl<S: Scalar> PathFunctional<S> for LinearEndpoint<S> {
    fn value(&self, traj: &Trajectory<S>) -> S {
        dot(&self.0, traj.last())
    }
    fn gradient(&self, traj: &Trajectory<S>) -> Option<Trajectory<S>> {
        let mut g = Trajectory::zeros(traj.grid, traj.dim);
        let n = traj.len() - 1;
        g.state_mut(n).copy_from_slice(&self.0);
        Some(g)
    }
}

/// `h(z) = ‖z(T) − c‖²_H`.
#[derive(Debug, Clone)]
pub struct EndpointDistanceSq<S>(pub Vec<S>);

impl<S: Scalar> PathFunctional<S> for EndpointDistanceSq<S> {
    fn value(&self, traj: &Trajectory<S>) -> S {
        traj.last().iter().zip(&self.0).map(|(&a, &b)| (a - b) * (a - b)).sum()
    }
    fn gradient(&self, traj: &Trajectory<S>) -> Option<Trajectory<S>> {
        let mut g = Trajectory::zeros(traj.grid, traj.dim);
        let n = traj.len() - 1;
        for ((o, &a), &b) in g.state_mut(n).iter_mut().zip(traj.last()).zip(&self.0) {
            *o = S::c(2.0) * (a - b);
        }
        Some(g)
    }
}

/// Target sets for the rate minimization and the Monte Carlo probes.
#[derive(Clone)]
pub enum TargetEvent<S> {
    /// `{z : ‖z(T) − center‖_H ≤ radius}`.
    EndpointBall { center: Vec<S>, radius: S },
    /// `{z : ⟨direction, z(T)⟩ ≥ level}`.
    EndpointHalfspace { direction: Vec<S>, level: S },
    /// `{z : h(z) ≤ 0}`.
    PathFunctional(Arc<dyn PathFunctional<S>>),
}

impl<S: fmt::Debug> fmt::Debug for TargetEvent<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetEvent::EndpointBall { center, radius } => {
                f.debug_struct("EndpointBall").field("center", center).field("radius", radius).finish()
            }
            TargetEvent::EndpointHalfspace { direction, level } => {
                f.debug_struct("EndpointHalfspace").field("direction", direction).field("level", level).finish()
            }
            TargetEvent::PathFunctional(_) => f.write_str("PathFunctional(..)"),
        }
    }
}

impl<S: Scalar> TargetEvent<S> {
    pub fn ball(center: Vec<S>, radius: S) -> Result<Self> {
        if !(radius > S::zero()) {
            return Err(Error::InvalidParameter(format!("ball radius must be positive, got {radius}")));
        }
        Ok(TargetEvent::EndpointBall { center, radius })
    }

    pub fn halfspace(direction: Vec<S>, level: S) -> Result<Self> {
        if dot(&direction, &direction) == S::zero() {
            return Err(Error::ZeroVector);
        }
        Ok(TargetEvent::EndpointHalfspace { direction, level })
    }

    /// `true` when only the endpoint matters.
    pub fn is_endpoint(&self) -> bool {
        !matches!(self, TargetEvent::PathFunctional(_))
    }

    pub fn check_dim(&self, m: usize) -> Result<()> {
        match self {
            TargetEvent::EndpointBall { center, .. } => check_dim(m, center.len()),
            TargetEvent::EndpointHalfspace { direction, .. } => check_dim(m, direction.len()),
            TargetEvent::PathFunctional(_) => Ok(()),
        }
    }

    /// Membership of an endpoint; path events need [`Self::contains`].
    pub fn contains_endpoint(&self, y: &[S]) -> Option<bool> {
        match self {
            TargetEvent::EndpointBall { center, radius } => {
                Some(y.iter().zip(center).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>().sqrt() <= *radius)
            }
            TargetEvent::EndpointHalfspace { direction, level } => Some(dot(direction, y) >= *level),
            TargetEvent::PathFunctional(_) => None,
        }
    }

    pub fn contains(&self, traj: &Trajectory<S>) -> bool {
        match self {
            TargetEvent::PathFunctional(h) => h.value(traj) <= S::zero(),
            _ => self.contains_endpoint(traj.last()).unwrap_or(false),
        }
    }

    /// Distance of the path to the event: Euclidean distance of the
    /// endpoint for endpoint events, `max(h, 0)` for path events.
    pub fn distance(&self, traj: &Trajectory<S>) -> S {
        let y = traj.last();
        match self {
            TargetEvent::EndpointBall { center, radius } => {
                let r = y.iter().zip(center).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>().sqrt();
                (r - *radius).max(S::zero())
            }
            TargetEvent::EndpointHalfspace { direction, level } => {
                ((*level - dot(direction, y)) / dot(direction, direction).sqrt()).max(S::zero())
            }
            TargetEvent::PathFunctional(h) => h.value(traj).max(S::zero()),
        }
    }

    /// `dist²` and its gradient with respect to every node.
    fn distance_sq_gradient(&self, traj: &Trajectory<S>, fd_step: S) -> (S, Trajectory<S>) {
        let mut g = Trajectory::zeros(traj.grid, traj.dim);
        let n = traj.len() - 1;
        let y = traj.last();
        let two = S::c(2.0);
        match self {
            TargetEvent::EndpointBall { center, radius } => {
                let r = y.iter().zip(center).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>().sqrt();
                let d = (r - *radius).max(S::zero());
                if d > S::zero() {
                    for ((o, &a), &b) in g.state_mut(n).iter_mut().zip(y).zip(center) {
                        *o = two * d * (a - b) / r;
                    }
                }
                (d * d, g)
            }
            TargetEvent::EndpointHalfspace { direction, level } => {
                let nd = dot(direction, direction).sqrt();
                let d = ((*level - dot(direction, y)) / nd).max(S::zero());
                for (o, &v) in g.state_mut(n).iter_mut().zip(direction) {
                    *o = -two * d * v / nd;
                }
                (d * d, g)
            }
            TargetEvent::PathFunctional(h) => {
                let (v, gh) = functional_gradient(h.as_ref(), traj, fd_step);
                let d = v.max(S::zero());
                for (o, &x) in g.states.iter_mut().zip(&gh.states) {
                    *o = two * d * x;
                }
                (d * d, g)
            }
        }
    }
}

fn functional_gradient<S: Scalar>(h: &dyn PathFunctional<S>, traj: &Trajectory<S>, fd_step: S) -> (S, Trajectory<S>) {
    let v = h.value(traj);
    if let Some(g) = h.gradient(traj) {
        return (v, g);
    }
    let mut g = Trajectory::zeros(traj.grid, traj.dim);
    let mut probe = traj.clone();
    for k in 0..traj.states.len() {
        let x = probe.states[k];
        probe.states[k] = x + fd_step;
        let up = h.value(&probe);
        probe.states[k] = x - fd_step;
        let dn = h.value(&probe);
        probe.states[k] = x;
        g.states[k] = (up - dn) / (S::c(2.0) * fd_step);
    }
    (v, g)
}

/// `(½‖ψ‖², u^ψ)` with `u^ψ` from the fixed-point skeleton solver.
pub fn rate_along<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    x: &[S],
    cfg: &SkeletonConfig<S>,
) -> Result<(S, Trajectory<S>)> {
    let sol = solve_skeleton(triple, pair, psi, x, cfg)?;
    Ok((psi.action(), sol.trajectory))
}

/// The terminal part of an objective `½‖ψ‖² + Φ(u^ψ)`.
enum PathCost<'a, S> {
    /// `penalty · dist(u, event)²`.
    Penalty(&'a TargetEvent<S>, S),
    /// `h(u)`.
    Functional(&'a dyn PathFunctional<S>),
}

impl<S: Scalar> PathCost<'_, S> {
    fn eval(&self, traj: &Trajectory<S>, fd_step: S) -> (S, Trajectory<S>) {
        match self {
            PathCost::Penalty(ev, p) => {
                let (v, mut g) = ev.distance_sq_gradient(traj, fd_step);
                g.states.iter_mut().for_each(|x| *x *= *p);
                (*p * v, g)
            }
            PathCost::Functional(h) => functional_gradient(*h, traj, fd_step),
        }
    }
}

/// Options for Jacobian-free fallbacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientConfig {
    /// Replace missing Jacobians by central differences.
    pub fd_fallback: bool,
    pub fd_step: f64,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self { fd_fallback: true, fd_step: 1e-6 }
    }
}

/// Adds `Δt (∂_u F(t,u))ᵀ μ` to `out`.
fn add_drift_jt<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    t: S,
    dt: S,
    u: &[S],
    mu: &[S],
    gcfg: &GradientConfig,
    out: &mut [S],
) -> Result<()> {
    if !pair.has_drift() {
        return Ok(());
    }
    let m = u.len();
    let mut tmp = vec![S::zero(); m];
    if pair.drift_jacobian_transpose(t, u, mu, &mut tmp) {
        axpy(dt, &tmp, out);
        return Ok(());
    }
    if !gcfg.fd_fallback {
        return Err(Error::MissingJacobian("drift"));
    }
    let h = S::c(gcfg.fd_step);
    let mut p = u.to_vec();
    let mut fp = vec![S::zero(); m];
    let mut fm = vec![S::zero(); m];
    for k in 0..m {
        p[k] = u[k] + h;
        pair.drift(t, &p, &mut fp);
        p[k] = u[k] - h;
        pair.drift(t, &p, &mut fm);
        p[k] = u[k];
        out[k] += dt * (dot(mu, &fp) - dot(mu, &fm)) / (S::c(2.0) * h);
    }
    Ok(())
}

/// Adds `Δt ∇_u ⟨μ, G(t,u)ψ⟩` to `out`.
#[allow(clippy::too_many_arguments)]
fn add_noise_jt<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    t: S,
    dt: S,
    u: &[S],
    psi: &[S],
    mu: &[S],
    gcfg: &GradientConfig,
    out: &mut [S],
) -> Result<()> {
    if !pair.has_state_noise() {
        return Ok(());
    }
    let m = u.len();
    let mut tmp = vec![S::zero(); m];
    if pair.noise_jacobian_transpose(t, u, psi, mu, &mut tmp) {
        axpy(dt, &tmp, out);
        return Ok(());
    }
    if !gcfg.fd_fallback {
        return Err(Error::MissingJacobian("noise"));
    }
    let h = S::c(gcfg.fd_step);
    let mut p = u.to_vec();
    let mut gm = NoiseMatrix::zeros(m, pair.noise_dim());
    for k in 0..m {
        p[k] = u[k] + h;
        pair.noise(t, &p, &mut gm);
        let up = dot(mu, &gm.apply(psi));
        p[k] = u[k] - h;
        pair.noise(t, &p, &mut gm);
        let dn = dot(mu, &gm.apply(psi));
        p[k] = u[k];
        out[k] += dt * (up - dn) / (S::c(2.0) * h);
    }
    Ok(())
}

/// Value and gradient of `½‖ψ‖² + Φ(u^ψ)` through the discrete adjoint.
///
/// For the step `Lu_{i+1} = u_i + Δt(F(u_i) + f) + Δt B(u_i)ψ_i` with
/// `L = I + ΔtA₀`, the adjoint runs backwards with `μ = L⁻ᵀλ_{i+1}`,
/// `λ_i = ∂Φ/∂u_i + μ + Δt[J_Fᵀμ + (Σψ_nB₀ₙ)ᵀμ + ∇⟨μ, Gψ⟩]` and
/// `∂/∂ψ_{i,n} = Δtψ_{i,n} + Δt⟨μ, B(u_i)e_n⟩`. Pairs whose `A₀`, `B₀`
/// depend on the state get central differences on every cell instead.
fn objective_gradient<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    x: &[S],
    cost: &PathCost<'_, S>,
    gcfg: &GradientConfig,
) -> Result<(S, Control<S>, Trajectory<S>)> {
    let traj = forward_march(pair, psi, x)?;
    let (phi, dphi) = cost.eval(&traj, S::c(gcfg.fd_step));
    let value = psi.action() + phi;
    if !pair.is_semilinear() {
        if !gcfg.fd_fallback {
            return Err(Error::MissingJacobian("state-dependent leading operators"));
        }
        let h = S::c(gcfg.fd_step);
        let mut grad = Control::zeros(psi.grid, psi.noise_dim);
        let mut probe = psi.clone();
        for k in 0..psi.values.len() {
            let v = probe.values[k];
            probe.values[k] = v + h;
            let up = probe.action() + cost.eval(&forward_march(pair, &probe, x)?, h).0;
            probe.values[k] = v - h;
            let dn = probe.action() + cost.eval(&forward_march(pair, &probe, x)?, h).0;
            probe.values[k] = v;
            grad.values[k] = (up - dn) / (S::c(2.0) * h);
        }
        return Ok((value, grad, traj));
    }
    let grid = psi.grid;
    let dt = grid.dt();
    let m = pair.dim();
    let kdim = psi.noise_dim;
    let mut grad = Control::zeros(grid, kdim);
    let mut lam = dphi.last().to_vec();
    let mut bmat = NoiseMatrix::zeros(m, kdim);
    let mut tmp = NoiseMatrix::zeros(m, kdim);
    for i in (0..grid.steps).rev() {
        let t = grid.node(i);
        let u = traj.state(i);
        let a0 = pair.a0(t, u);
        let mut mu = lam.clone();
        a0.shifted(dt)
            .ok_or_else(|| Error::LinearSolve { step: i, reason: "I + Δt·A₀ is singular".into() })?
            .solve_transpose_in_place(&mut mu);
        // control gradient
        bmat.fill_zero();
        if pair.has_state_noise() {
            pair.noise(t, u, &mut bmat);
        }
        pair.additive_noise(t, &mut tmp);
        bmat.add_scaled(S::one(), &tmp);
        let b0 = pair.b0(t, u);
        b0.add_apply(u, &mut bmat);
        let bt_mu = bmat.apply_transpose(&mu);
        let psi_i = psi.cell(i);
        for ((g, &p), &b) in grad.cell_mut(i).iter_mut().zip(psi_i).zip(&bt_mu) {
            *g = dt * p + dt * b;
        }
        // state adjoint
        let mut next = mu.clone();
        axpy(S::one(), dphi.state(i), &mut next);
        add_drift_jt(pair, t, dt, u, &mu, gcfg, &mut next)?;
        b0.add_apply_combined_transpose(dt, psi_i, &mu, &mut next);
        add_noise_jt(pair, t, dt, u, psi_i, &mu, gcfg, &mut next)?;
        lam = next;
    }
    Ok((value, grad, traj))
}

/// Value and adjoint gradient of `½‖ψ‖² + penalty·dist(u^ψ, event)²`.
pub fn adjoint_gradient<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    event: &TargetEvent<S>,
    penalty: S,
    x: &[S],
    gcfg: &GradientConfig,
) -> Result<(S, Control<S>)> {
    check_dim(pair.noise_dim(), psi.noise_dim)?;
    event.check_dim(pair.dim())?;
    let (v, g, _) = objective_gradient(pair, psi, x, &PathCost::Penalty(event, penalty), gcfg)?;
    Ok((v, g))
}

/// Value and adjoint gradient of `½‖ψ‖² + h(u^ψ)`.
pub fn functional_objective_gradient<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    h: &dyn PathFunctional<S>,
    x: &[S],
    gcfg: &GradientConfig,
) -> Result<(S, Control<S>)> {
    check_dim(pair.noise_dim(), psi.noise_dim)?;
    let (v, g, _) = objective_gradient(pair, psi, x, &PathCost::Functional(h), gcfg)?;
    Ok((v, g))
}

/// Central difference of the same objective along `direction`.
pub fn directional_fd<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    direction: &Control<S>,
    event: &TargetEvent<S>,
    penalty: S,
    x: &[S],
    h: S,
) -> Result<S> {
    let cost = PathCost::Penalty(event, penalty);
    let eval = |c: &Control<S>| -> Result<S> {
        let traj = forward_march(pair, c, x)?;
        Ok(c.action() + cost.eval(&traj, h).0)
    };
    let up = eval(&psi.add(&direction.scaled(h))?)?;
    let dn = eval(&psi.add(&direction.scaled(-h))?)?;
    Ok((up - dn) / (S::c(2.0) * h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MamConfig {
    pub initial_penalty: f64,
    /// Penalty multiplier between stages.
    pub penalty_growth: f64,
    /// Stages always run.
    pub min_stages: usize,
    /// Stages allowed while the violation is above `tol`.
    pub max_stages: usize,
    /// Accepted residual distance to the event.
    pub tol: f64,
    /// A stage that shrinks the violation by less than this factor counts
    /// as stagnation; stagnation at the last stage gives the `+∞` verdict.
    pub stagnation: f64,
    /// Optional cap `‖ψ‖_{L²} ≤ cap` (controls are projected onto the ball).
    pub control_cap: Option<f64>,
    /// Extra starts from random controls, run in parallel.
    pub restarts: usize,
    pub seed: u64,
    pub lbfgs: LbfgsConfig,
    pub gradient: GradientConfig,
}

impl Default for MamConfig {
    fn default() -> Self {
        Self {
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            min_stages: 4,
            max_stages: 8,
            tol: 1e-5,
            stagnation: 0.5,
            control_cap: None,
            restarts: 0,
            seed: 0,
            lbfgs: LbfgsConfig::default(),
            gradient: GradientConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub penalty: f64,
    pub objective: f64,
    pub action: f64,
    pub violation: f64,
    pub trace: OptimTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub mr_norm: f64,
    pub endpoint_distance: f64,
    /// Margin of the a-priori MR bound along the minimizer.
    pub global_bound_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateStatus {
    Converged,
    /// The violation stagnated above tolerance: `inf ∅ = +∞`.
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateResult<S> {
    /// `½‖ψ‖²` of the minimizer, or `+∞` for the infeasible verdict.
    pub value: S,
    pub status: RateStatus,
    pub control: Control<S>,
    pub constraint_violation: S,
    pub stages: Vec<StageReport>,
    pub certificate: RateCertificate,
}

impl<S: Scalar> RateResult<S> {
    pub fn is_feasible(&self) -> bool {
        self.status == RateStatus::Converged
    }
}

/// Projection of the flat control vector onto `{‖ψ‖_{L²} ≤ cap}` and the
/// transpose of its Jacobian applied to `g`.
fn project<S: Scalar>(v: &[S], dt: S, cap: Option<S>) -> (Vec<S>, Option<(S, S)>) {
    let Some(cap) = cap else { return (v.to_vec(), None) };
    let norm = (dot(v, v) * dt).sqrt();
    if norm <= cap {
        (v.to_vec(), None)
    } else {
        (v.iter().map(|&x| x * cap / norm).collect(), Some((cap / norm, norm)))
    }
}

fn project_grad<S: Scalar>(v: &[S], dt: S, scale: Option<(S, S)>, g: &mut [S]) {
    let Some((s, norm)) = scale else { return };
    // J = s(I − v vᵀ dt/‖v‖²), symmetric under the weighted product
    let c = dot(v, g) / (norm * norm) * dt;
    for (gi, &vi) in g.iter_mut().zip(v) {
        *gi = s * (*gi - c * vi);
    }
}

fn run_stages<'c, S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    x: &[S],
    grid: TimeGrid<S>,
    cost: &dyn Fn(S) -> PathCost<'c, S>,
    start: Control<S>,
    cfg: &MamConfig,
    penalized: bool,
) -> Result<(Control<S>, Vec<StageReport>)> {
    let k = pair.noise_dim();
    let dt = grid.dt();
    let cap = cfg.control_cap.map(S::c);
    let mut z = start.values;
    let mut stages = Vec::new();
    let n_stages = if penalized { cfg.max_stages.max(cfg.min_stages).max(1) } else { 1 };
    let mut penalty = S::c(cfg.initial_penalty);
    for s in 0..n_stages {
        let c = cost(penalty);
        let f = |v: &[S]| -> Result<(S, Vec<S>)> {
            let (pv, scale) = project(v, dt, cap);
            let psi = Control::from_values(grid, k, pv)?;
            let (val, g, _) = objective_gradient(pair, &psi, x, &c, &cfg.gradient)?;
            let mut g = g.values;
            project_grad(v, dt, scale, &mut g);
            Ok((val, g))
        };
        let (zn, obj, trace) = lbfgs(z, f, &cfg.lbfgs)?;
        z = zn;
        let (pv, _) = project(&z, dt, cap);
        let psi = Control::from_values(grid, k, pv)?;
        let traj = forward_march(pair, &psi, x)?;
        let violation = match &c {
            PathCost::Penalty(ev, _) => ev.distance(&traj),
            PathCost::Functional(_) => S::zero(),
        };
        stages.push(StageReport {
            penalty: penalty.f64(),
            objective: obj.f64(),
            action: psi.action().f64(),
            violation: violation.f64(),
            trace,
        });
        if s + 1 >= cfg.min_stages && violation <= S::c(cfg.tol) {
            break;
        }
        penalty *= S::c(cfg.penalty_growth);
    }
    let (pv, _) = project(&z, dt, cap);
    Ok((Control::from_values(grid, k, pv)?, stages))
}

fn random_control<S: Scalar>(grid: TimeGrid<S>, k: usize, seed: u64, stream: &str) -> Control<S> {
    let mut rng = substream(seed, stream);
    let vals = (0..grid.steps * k)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            S::c(z)
        })
        .collect();
    Control { grid, noise_dim: k, values: vals }
}

fn certificate<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    x: &[S],
    traj: &Trajectory<S>,
    event: Option<&TargetEvent<S>>,
) -> RateCertificate {
    let mr = traj.mr_norm(triple);
    RateCertificate {
        mr_norm: mr.f64(),
        endpoint_distance: event.map_or(0.0, |e| e.distance(traj).f64()),
        global_bound_margin: (global_bound(pair, psi, x) - mr).f64(),
    }
}

/// Minimum action method: minimizes `½‖ψ‖² + p·dist(u^ψ, event)²` by
/// L-BFGS under geometric penalty continuation, starting from `ψ = 0`
/// (plus optional random restarts, best result kept).
pub fn minimize_rate<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    event: &TargetEvent<S>,
    x: &[S],
    grid: TimeGrid<S>,
    cfg: &MamConfig,
) -> Result<RateResult<S>> {
    check_dim(pair.dim(), x.len())?;
    event.check_dim(pair.dim())?;
    let k = pair.noise_dim();
    let cost = |p: S| PathCost::Penalty(event, p);
    let starts: Vec<Control<S>> = std::iter::once(Control::zeros(grid, k))
        .chain((0..cfg.restarts).map(|r| random_control(grid, k, cfg.seed, &format!("mam/restart/{r}"))))
        .collect();
    let runs: Vec<Result<(Control<S>, Vec<StageReport>)>> =
        starts.into_par_iter().map(|s| run_stages(pair, x, grid, &cost, s, cfg, true)).collect();
    let mut best: Option<(Control<S>, Vec<StageReport>)> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(run) => {
                let key = |s: &[StageReport]| {
                    let l = s.last().expect("at least one stage");
                    (l.violation > cfg.tol, l.action)
                };
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let (vn, an) = key(&run.1);
                        let (vb, ab) = key(&b.1);
                        (vn, an) < (vb, ab) || (!vn && vb)
                    }
                };
                if better {
                    best = Some(run);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((control, stages)) = best else {
        return Err(first_err.unwrap_or_else(|| Error::Nonconvergence("no optimizer run".into())));
    };
    let traj = forward_march(pair, &control, x)?;
    let violation = event.distance(&traj);
    let status = if violation <= S::c(cfg.tol) {
        RateStatus::Converged
    } else {
        let n = stages.len();
        let stagnant =
            n >= 2 && stages[n - 1].violation > cfg.stagnation * stages[n - 2].violation;
        if !stagnant {
            return Err(Error::Nonconvergence(format!(
                "constraint violation {} still above {} after {} penalty stages",
                violation,
                cfg.tol,
                n
            )));
        }
        RateStatus::Infeasible
    };
    let value = if status == RateStatus::Converged { control.action() } else { S::infinity() };
    let certificate = certificate(triple, pair, &control, x, &traj, Some(event));
    Ok(RateResult { value, status, control, constraint_violation: violation, stages, certificate })
}

/// `inf_ψ (½‖ψ‖² + h(u^ψ))`, the right side of the Laplace principle.
pub fn minimize_augmented<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    h: &dyn PathFunctional<S>,
    x: &[S],
    grid: TimeGrid<S>,
    cfg: &MamConfig,
) -> Result<RateResult<S>> {
    check_dim(pair.dim(), x.len())?;
    let cost = |_p: S| PathCost::Functional(h);
    let (control, stages) = run_stages(pair, x, grid, &cost, Control::zeros(grid, pair.noise_dim()), cfg, false)?;
    let traj = forward_march(pair, &control, x)?;
    let value = control.action() + h.value(&traj);
    let certificate = certificate(triple, pair, &control, x, &traj, None);
    Ok(RateResult {
        value,
        status: RateStatus::Converged,
        control,
        constraint_violation: S::zero(),
        stages,
        certificate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakContinuityRow {
    pub n: usize,
    pub distance: f64,
}

/// `‖u^{ψ_n} − u^ψ‖_MR` for `ψ_n = ψ + amplitude·sin(2πnt)·e_dir`, which
/// converges weakly to `ψ`.
#[allow(clippy::too_many_arguments)]
pub fn weak_continuity_probe<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    psi: &Control<S>,
    x: &[S],
    n_list: &[usize],
    amplitude: S,
    dir: usize,
    cfg: &SkeletonConfig<S>,
) -> Result<Vec<WeakContinuityRow>> {
    if dir >= pair.noise_dim() {
        return Err(Error::InvalidParameter(format!("noise direction {dir} out of range")));
    }
    let base = solve_skeleton(triple, pair, psi, x, cfg)?.trajectory;
    n_list
        .par_iter()
        .map(|&n| {
            let osc = Control::oscillatory(psi.grid, psi.noise_dim, n, dir, amplitude);
            let u = solve_skeleton(triple, pair, &psi.add(&osc)?, x, cfg)?.trajectory;
            Ok(WeakContinuityRow { n, distance: u.mr_distance(triple, &base).f64() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublevelReport {
    pub level: f64,
    pub mr_norms: Vec<f64>,
    /// `max − min` of the MR norms.
    pub spread: f64,
    pub max_pairwise_distance: f64,
    /// Smallest margin of the a-priori MR bound.
    pub min_bound_margin: f64,
}

/// Samples controls with `½‖ψ‖² = level` and summarizes the resulting
/// skeleton paths.
#[allow(clippy::too_many_arguments)]
pub fn sublevel_sample<S: Scalar>(
    triple: &SpectralTriple<S>,
    pair: &dyn CoefficientPair<S>,
    level: S,
    x: &[S],
    grid: TimeGrid<S>,
    n_controls: usize,
    seed: u64,
    cfg: &SkeletonConfig<S>,
) -> Result<SublevelReport> {
    if level < S::zero() {
        return Err(Error::InvalidParameter(format!("level must be nonnegative, got {level}")));
    }
    let k = pair.noise_dim();
    let count = if level == S::zero() { 1 } else { n_controls.max(1) };
    let controls: Vec<Control<S>> = (0..count)
        .map(|r| {
            if level == S::zero() {
                return Control::zeros(grid, k);
            }
            let c = random_control(grid, k, seed, &format!("sublevel/{r}"));
            let s = (level / c.action()).sqrt();
            c.scaled(s)
        })
        .collect();
    let paths: Vec<(Trajectory<S>, S)> = controls
        .par_iter()
        .map(|c| {
            let u = solve_skeleton(triple, pair, c, x, cfg)?.trajectory;
            let margin = global_bound(pair, c, x) - u.mr_norm(triple);
            Ok((u, margin))
        })
        .collect::<Result<_>>()?;
    let mr_norms: Vec<f64> = paths.iter().map(|(u, _)| u.mr_norm(triple).f64()).collect();
    let spread = mr_norms.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - mr_norms.iter().copied().fold(f64::INFINITY, f64::min);
    let mut max_pairwise_distance = 0.0_f64;
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            max_pairwise_distance = max_pairwise_distance.max(paths[i].0.mr_distance(triple, &paths[j].0).f64());
        }
    }
    Ok(SublevelReport {
        level: level.f64(),
        mr_norms,
        spread,
        max_pairwise_distance,
        min_bound_margin: paths.iter().map(|p| p.1.f64()).fold(f64::INFINITY, f64::min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lq::LqOracle;
    use crate::models::{allen_cahn1d, heat1d_transport, ou};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn action_gradient_of_linear_pair_is_psi_dt() {
        let (pair, _) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let psi = Control::from_fn(grid, 1, |t: f64| vec![t.sin()]);
        let ev = TargetEvent::ball(vec![0.0], 10.0).unwrap();
        let (_, g) = adjoint_gradient(&pair, &psi, &ev, 1.0, &[0.0], &GradientConfig::default()).unwrap();
        for (a, b) in g.values.iter().zip(&psi.values) {
            assert!((a - b * 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let (ou_pair, _) = ou(1.0_f64, 1.0).unwrap();
        let (ac, _) = allen_cahn1d(16, 1.0, 1.0, 2).unwrap();
        let (heat, _) = heat1d_transport(1.0, 1.0, 0.5, 4).unwrap();
        let pairs: Vec<(&dyn CoefficientPair<f64>, Vec<f64>)> = vec![
            (&ou_pair, vec![0.2]),
            (&ac, (0..16).map(|k| 0.3 / (k + 1) as f64).collect()),
            (&heat, (0..heat.dim()).map(|k| 0.2 / (k + 1) as f64).collect()),
        ];
        let grid = TimeGrid::new(0.5, 20).unwrap();
        for (pair, x) in pairs {
            let k = pair.noise_dim();
            let psi = random_control(grid, k, 3, "t/psi");
            let dir = random_control(grid, k, 3, "t/dir");
            let mut target = x.clone();
            target[0] += 1.0;
            let ev = TargetEvent::ball(target, 0.1).unwrap();
            let (_, g) = adjoint_gradient(pair, &psi, &ev, 10.0, &x, &GradientConfig::default()).unwrap();
            let adj: f64 = g.values.iter().zip(&dir.values).map(|(a, b)| a * b).sum();
            let fd = directional_fd(pair, &psi, &dir, &ev, 10.0, &x, 1e-6).unwrap();
            assert!(rel(adj, fd) < 1e-5, "{}: {adj} vs {fd}", pair.name());
        }
    }

    #[test]
    fn mam_matches_the_lq_oracle() {
        let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let oracle = LqOracle::new(&pair, &[0.0], grid).unwrap();
        let ev = TargetEvent::ball(vec![1.0], 0.05).unwrap();
        let r = minimize_rate(&triple, &pair, &ev, &[0.0], grid, &MamConfig::default()).unwrap();
        let exact = oracle.ball_cost(&[1.0], 0.05).unwrap();
        assert!(rel(r.value, exact) < 1e-3, "{} vs {exact}", r.value);
        assert!(r.is_feasible());
    }

    #[test]
    fn unreachable_ball_under_a_cap_is_infeasible() {
        let (pair, triple) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let ev = TargetEvent::ball(vec![5.0], 0.01).unwrap();
        let cfg = MamConfig { control_cap: Some(1.0), ..MamConfig::default() };
        let r = minimize_rate(&triple, &pair, &ev, &[0.0], grid, &cfg).unwrap();
        assert_eq!(r.status, RateStatus::Infeasible);
        assert!(r.value.is_infinite());
    }
}
