//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `‖∇f‖ ≤ grad_tol · max(1, ‖∇f(x₀)‖)`.
    pub grad_tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 10, max_iterations: 500, grad_tol: 1e-8, armijo: 1e-4, max_backtracks: 50 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    pub values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
    /// Set when the line search could not decrease the objective further.
    pub stalled: bool,
}

impl OptimTrace {
    pub fn iterations(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

/// Minimizes `f`, which returns the value and gradient; evaluation errors
/// during the line search count as `+∞`. Errors at the start point are
/// returned.
pub fn lbfgs<S: Scalar>(
    x0: Vec<S>,
    mut f: impl FnMut(&[S]) -> Result<(S, Vec<S>)>,
    cfg: &LbfgsConfig,
) -> Result<(Vec<S>, S, OptimTrace)> {
    let mut trace = OptimTrace::default();
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    trace.evaluations = 1;
    let g0 = dot(&g, &g).sqrt();
    let tol = S::c(cfg.grad_tol) * g0.max(S::one());
    trace.values.push(fx.f64());
    trace.grad_norms.push(g0.f64());
    let mut hist: VecDeque<(Vec<S>, Vec<S>, S)> = VecDeque::with_capacity(cfg.memory);
    let n = x.len();
    for _ in 0..cfg.max_iterations {
        let gn = dot(&g, &g).sqrt();
        if gn <= tol {
            trace.converged = true;
            break;
        }
        // two-loop recursion
        let mut d: Vec<S> = g.iter().map(|&v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = *rho * dot(s, &d);
            for (di, &yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = *rho * dot(y, &d);
            for (di, &si) in d.iter_mut().zip(s) {
                *di += (*a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < S::zero()) {
            hist.clear();
            d = g.iter().map(|&v| -v).collect();
            slope = -gn * gn;
        }
        let mut step = if hist.is_empty() { (S::one() / gn).min(S::one()) } else { S::one() };
        let mut accepted = None;
        for _ in 0..cfg.max_backtracks {
            let xn: Vec<S> = x.iter().zip(&d).map(|(&a, &b)| a + step * b).collect();
            trace.evaluations += 1;
            if let Ok((fn_, gn_)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + S::c(cfg.armijo) * step * slope {
                    accepted = Some((xn, fn_, gn_));
                    break;
                }
            }
            step *= S::c(0.5);
        }
        let Some((xn, fn_, gn_)) = accepted else {
            trace.stalled = true;
            break;
        };
        let s: Vec<S> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<S> = (0..n).map(|i| gn_[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > S::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if hist.len() == cfg.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, sy.recip()));
        }
        let progress = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn_;
        trace.values.push(fx.f64());
        trace.grad_norms.push(dot(&g, &g).sqrt().f64());
        if !(progress > S::epsilon() * S::c(4.0) * fx.abs().max(S::min_positive_value())) {
            let gn = dot(&g, &g).sqrt();
            trace.converged = gn <= tol;
            trace.stalled = !trace.converged;
            break;
        }
    }
    if !trace.converged && dot(&g, &g).sqrt() <= tol {
        trace.converged = true;
    }
    Ok((x, fx, trace))
}
