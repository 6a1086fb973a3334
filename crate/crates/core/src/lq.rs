//! Exact discrete linear-quadratic oracle for linear pairs with additive
//! noise.
//!
//! For `A₀ = a` constant, `B = σ` constant and `F = G = 0`, the scheme reads
//! `X_{i+1} = Φ(X_i + Δtσψ_i + √εσΔW_i)` with `Φ = (I + Δta)⁻¹`, so
//!
//! ```text
//! X_N = m + Σ_i G_i(ψ_i + √εΔW_i/Δt),   m = Φᴺx,   G_i = Φ^{N−i}σΔt.
//! ```
//!
//! With the Gramian `W = Σ_i G_iG_iᵀ/Δt`, the cheapest control reaching
//! `X_N = y` costs `½(y−m)ᵀW⁻¹(y−m)` and `X_N ~ N(m, εW)` under the noise.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{DenseMatrix, Lu, NoiseMatrix, ShiftedSolver};
use crate::models::LinearSde;
use crate::path::{Control, TimeGrid};
use crate::scalar::{dot, Scalar};
use crate::stats::normal_tail;

#[derive(Debug, Clone)]
pub struct LqOracle<S> {
    grid: TimeGrid<S>,
    phi: ShiftedSolver<S>,
    sigma: NoiseMatrix<S>,
    mean: Vec<S>,
    /// Row-major `n × n`.
    w: Vec<S>,
}

fn outer_add<S: Scalar>(n: usize, alpha: S, v: &[S], out: &mut [S]) {
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] += alpha * v[r] * v[c];
        }
    }
}

impl<S: Scalar> LqOracle<S> {
    pub fn new(pair: &LinearSde<S>, x: &[S], grid: TimeGrid<S>) -> Result<Self> {
        let n = pair.sigma().rows();
        check_dim(n, x.len())?;
        let dt = grid.dt();
        let phi = pair
            .drift_operator()
            .shifted(dt)
            .ok_or_else(|| Error::LinearSolve { step: 0, reason: "I + Δt·a is singular".into() })?;
        let mut mean = x.to_vec();
        for _ in 0..grid.steps {
            phi.solve_in_place(&mut mean);
        }
        // W = Δt Σ_{j=1..N} (Φʲσ)(Φʲσ)ᵀ
        let sigma = pair.sigma().clone();
        let mut cols: Vec<Vec<S>> = (0..sigma.cols()).map(|k| sigma.column(k).to_vec()).collect();
        let mut w = vec![S::zero(); n * n];
        for _ in 0..grid.steps {
            for c in cols.iter_mut() {
                phi.solve_in_place(c);
                outer_add(n, dt, c, &mut w);
            }
        }
        Ok(Self { grid, phi, sigma, mean, w })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Noise-free endpoint `m = Φᴺx`.
    pub fn mean(&self) -> &[S] {
        &self.mean
    }

    /// Gramian `W` (row-major), summed from powers of `Φ`.
    pub fn gramian(&self) -> &[S] {
        &self.w
    }

    /// The same Gramian from the covariance recursion
    /// `P_{i+1} = Φ(P_i + σσᵀΔt)Φᵀ`, `P_0 = 0`.
    pub fn gramian_by_recursion(&self) -> Vec<S> {
        let n = self.dim();
        let dt = self.grid.dt();
        let mut p = vec![S::zero(); n * n];
        let mut col = vec![S::zero(); n];
        for _ in 0..self.grid.steps {
            for k in 0..self.sigma.cols() {
                outer_add(n, dt, self.sigma.column(k), &mut p);
            }
            // p ← Φ p Φᵀ, one side at a time using symmetry
            for _ in 0..2 {
                for c in 0..n {
                    for r in 0..n {
                        col[r] = p[r * n + c];
                    }
                    self.phi.solve_in_place(&mut col);
                    for r in 0..n {
                        p[r * n + c] = col[r];
                    }
                }
                for r in 0..n {
                    for c in r + 1..n {
                        let (a, b) = (p[r * n + c], p[c * n + r]);
                        p[r * n + c] = b;
                        p[c * n + r] = a;
                    }
                }
            }
        }
        p
    }

    fn w_apply(&self, v: &[S]) -> Vec<S> {
        let n = self.dim();
        (0..n).map(|r| dot(&self.w[r * n..(r + 1) * n], v)).collect()
    }

    fn w_solve(&self, v: &[S]) -> Result<Vec<S>> {
        let lu = Lu::factor(DenseMatrix::from_row_major(self.dim(), self.w.clone())?)
            .ok_or_else(|| Error::LinearSolve { step: 0, reason: "Gramian is singular (target not controllable)".into() })?;
        Ok(lu.solve(v))
    }

    /// Minimal action `½(y−m)ᵀW⁻¹(y−m)` to reach `X_N = y` exactly.
    pub fn endpoint_cost(&self, y: &[S]) -> Result<S> {
        check_dim(self.dim(), y.len())?;
        let d: Vec<S> = y.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        Ok(S::c(0.5) * dot(&d, &self.w_solve(&d)?))
    }

    /// Minimizing control for the hard endpoint target `y`:
    /// `ψ_i = G_iᵀW⁻¹(y − m)/Δt`.
    pub fn optimal_control(&self, y: &[S]) -> Result<Control<S>> {
        check_dim(self.dim(), y.len())?;
        let d: Vec<S> = y.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        let mut lam = self.w_solve(&d)?;
        let k = self.sigma.cols();
        let mut psi = Control::zeros(self.grid, k);
        // G_iᵀλ = Δt σᵀ(Φᵀ)^{N−i}λ, so ψ_i = σᵀ(Φᵀ)^{N−i}λ
        for i in (0..self.grid.steps).rev() {
            self.phi.solve_transpose_in_place(&mut lam);
            psi.cell_mut(i).copy_from_slice(&self.sigma.apply_transpose(&lam));
        }
        Ok(psi)
    }

    /// `inf {½(y−m)ᵀW⁻¹(y−m) : ‖y − z‖ ≤ δ}`; zero when `m` lies in the
    /// ball, otherwise the boundary Lagrange problem solved by bisection on
    /// the multiplier in the eigenbasis of `W`.
    pub fn ball_cost(&self, z: &[S], delta: S) -> Result<S> {
        check_dim(self.dim(), z.len())?;
        if !(delta > S::zero()) {
            return Err(Error::InvalidParameter(format!("ball radius must be positive, got {delta}")));
        }
        let n = self.dim();
        let gap: Vec<S> = z.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        if dot(&gap, &gap).sqrt() <= delta {
            return Ok(S::zero());
        }
        let (lam, q) = DenseMatrix::from_row_major(n, self.w.clone())?.symmetric_eigen();
        if !(lam[0] > S::zero()) {
            return Err(Error::LinearSolve { step: 0, reason: "Gramian is singular (target not controllable)".into() });
        }
        // coordinates of z − m in the eigenbasis
        let g: Vec<S> = (0..n).map(|k| (0..n).map(|r| q.get(r, k) * gap[r]).sum()).collect();
        // ‖y(μ) − z‖ with y_k − z_k = −g_k/(1 + μλ_k), decreasing in μ
        let dist = |mu: S| (0..n).map(|k| (g[k] / (S::one() + mu * lam[k])).powi(2)).sum::<S>().sqrt();
        let mut hi = S::one();
        while dist(hi) > delta {
            hi *= S::c(2.0);
            if hi > S::c(1e300) {
                return Err(Error::Nonconvergence("ball multiplier bracket".into()));
            }
        }
        let mut lo = S::zero();
        for _ in 0..200 {
            let mid = S::c(0.5) * (lo + hi);
            if dist(mid) > delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = S::c(0.5) * (lo + hi);
        // y_k − m_k = μλ_k g_k/(1 + μλ_k)
        Ok(S::c(0.5)
            * (0..n)
                .map(|k| {
                    let s = mu * lam[k] * g[k] / (S::one() + mu * lam[k]);
                    s * s / lam[k]
                })
                .sum::<S>())
    }

    /// `inf {cost : ⟨d, y⟩ ≥ level} = ½((level − ⟨d,m⟩)₊)²/(dᵀWd)`.
    pub fn halfspace_cost(&self, d: &[S], level: S) -> Result<S> {
        check_dim(self.dim(), d.len())?;
        let gap = (level - dot(d, &self.mean)).max(S::zero());
        let var = dot(d, &self.w_apply(d));
        if !(var > S::zero()) {
            return if gap > S::zero() { Ok(S::infinity()) } else { Ok(S::zero()) };
        }
        Ok(S::c(0.5) * gap * gap / var)
    }

    /// Exact `P(⟨d, X_N⟩ ≥ level)` under noise level `ε`.
    pub fn halfspace_probability(&self, d: &[S], level: S, eps: S) -> Result<f64> {
        check_dim(self.dim(), d.len())?;
        let var = eps * dot(d, &self.w_apply(d));
        let gap = level - dot(d, &self.mean);
        if !(var > S::zero()) {
            return Ok(if gap <= S::zero() { 1.0 } else { 0.0 });
        }
        Ok(normal_tail((gap / var.sqrt()).f64()))
    }

    /// `inf_ψ (½‖ψ‖² + ⟨d, u^ψ(T)⟩) = ⟨d,m⟩ − ½dᵀWd`; for these dynamics it
    /// also equals `−ε log E exp(−⟨d, X_N⟩/ε)` at every `ε`.
    pub fn laplace_linear(&self, d: &[S]) -> Result<S> {
        check_dim(self.dim(), d.len())?;
        Ok(dot(d, &self.mean) - S::c(0.5) * dot(d, &self.w_apply(d)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{linear_sde, ou};
    use crate::skeleton::forward_march;

    #[test]
    fn scalar_gramian_is_a_geometric_sum() {
        let (pair, _) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let o = LqOracle::new(&pair, &[0.0], grid).unwrap();
        let r = 1.0 / 1.01_f64;
        let exact: f64 = (1..=100).map(|j| r.powi(2 * j)).sum::<f64>() * 0.01;
        assert!((o.gramian()[0] - exact).abs() < 1e-14);
        assert!((o.gramian_by_recursion()[0] - exact).abs() < 1e-14);
    }

    #[test]
    fn optimal_control_hits_the_target_at_the_oracle_cost() {
        let a = DenseMatrix::from_row_major(2, vec![1.0_f64, 0.3, -0.2, 2.0]).unwrap();
        let s = NoiseMatrix::from_columns(2, &[vec![1.0, 0.5]]).unwrap();
        let (pair, _) = linear_sde(a, s).unwrap();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let x = [0.2, -0.1];
        let o = LqOracle::new(&pair, &x, grid).unwrap();
        let y = [0.7, 0.4];
        let psi = o.optimal_control(&y).unwrap();
        let u = forward_march(&pair, &psi, &x).unwrap();
        assert!((u.last()[0] - y[0]).abs() < 1e-10 && (u.last()[1] - y[1]).abs() < 1e-10);
        assert!((psi.action() - o.endpoint_cost(&y).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn ball_cost_matches_the_scalar_formula() {
        let (pair, _) = ou(1.0_f64, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let o = LqOracle::new(&pair, &[0.0], grid).unwrap();
        let w = o.gramian()[0];
        let c = o.ball_cost(&[1.0], 0.1).unwrap();
        assert!((c - 0.5 * 0.81 / w).abs() < 1e-12);
        assert_eq!(o.ball_cost(&[0.05], 0.1).unwrap(), 0.0);
        assert!((o.halfspace_cost(&[1.0], 0.9).unwrap() - c).abs() < 1e-12);
    }
}
