use std::borrow::Cow;

use crate::coeffs::{CoefficientPair, Coercivity, Exponent, Phi};
use crate::error::{Error, Result};
use crate::linalg::{ColumnOperators, DenseMatrix, NoiseMatrix, Operator, SparseMatrix};
use crate::spectral::{FftScalar, Solenoidal2d};
use crate::triple::SpectralTriple;

/// 2D Navier–Stokes on the `2π`-torus in a divergence-free Fourier basis:
/// `A₀ = νA` (Stokes operator), `F(u) = Φ(u,u) = −P div(u⊗u)`, transport
/// noise `B₀ₙu = P[(bₙ·∇)u]` for constant fields `bₙ`, and an optional
/// extra noise mode `G(u) = g_lip·u`.
#[derive(Clone)]
pub struct Ns2dPeriodic<S: FftScalar> {
    nu: S,
    mu: S,
    g_lip: S,
    a0: Operator<S>,
    b0: ColumnOperators<S>,
    basis: Solenoidal2d<S>,
    exponents: Vec<Exponent>,
}

/// Builds the pair for wavevectors with `max(|k₁|,|k₂|) ≤ cutoff`.
///
/// The transport fields must satisfy `½Σₙ (bₙ·ξ)² ≤ μ|ξ|²` with `μ < ν`;
/// `μ` is the largest eigenvalue of `½Σₙ bₙbₙᵀ`, and a violation is
/// rejected with the worst retained wavevector as witness.
pub fn ns2d_periodic<S: FftScalar>(
    nu: S,
    cutoff: usize,
    b_fields: &[[S; 2]],
    g_lip: S,
) -> Result<(Ns2dPeriodic<S>, SpectralTriple<S>)> {
    if !(nu > S::zero()) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
    }
    if g_lip < S::zero() {
        return Err(Error::InvalidParameter(format!("g_lip must be nonnegative, got {g_lip}")));
    }
    let half = S::c(0.5);
    let mut q = [S::zero(); 4];
    for b in b_fields {
        q[0] += half * b[0] * b[0];
        q[1] += half * b[0] * b[1];
        q[3] += half * b[1] * b[1];
    }
    q[2] = q[1];
    let (vals, vecs) = DenseMatrix::from_row_major(2, q.to_vec())?.symmetric_eigen();
    let mu = vals[1];
    let triple = SpectralTriple::periodic2d(cutoff)?;
    let labels = triple.labels().expect("periodic2d triple carries labels");
    let basis = Solenoidal2d::from_labels(labels, cutoff).expect("periodic2d labels");
    if mu >= nu {
        // retained wavevector with the largest quotient ξᵀQξ/|ξ|²
        let mut best = (S::zero(), 0, 0);
        for i in 0..basis.dim() {
            let (k1, k2, _) = basis.mode(i);
            let (x, y) = (S::c(k1 as f64), S::c(k2 as f64));
            let r = (q[0] * x * x + S::c(2.0) * q[1] * x * y + q[3] * y * y) / (x * x + y * y);
            if r > best.0 {
                best = (r, k1, k2);
            }
        }
        return Err(Error::Rejected {
            reason: format!("transport bound μ = {mu} is not below ν = {nu}"),
            witness: format!(
                "direction ξ = ({:.6}, {:.6}); worst retained wavevector k = ({}, {}) with quotient {}",
                vecs.get(0, 1).f64(),
                vecs.get(1, 1).f64(),
                best.1,
                best.2,
                best.0
            ),
        });
    }
    let m = triple.dim();
    let a0 = Operator::Diagonal(triple.eigenvalues().iter().map(|&l| nu * l).collect());
    // (b·∇)[e cos(k·x)] = −(b·k) e sin(k·x), (b·∇)[e sin(k·x)] = (b·k) e cos(k·x)
    let mut ops: Vec<Operator<S>> = b_fields
        .iter()
        .map(|b| {
            let mut entries = Vec::with_capacity(m);
            for i in 0..m {
                let (k1, k2, cos) = basis.mode(i);
                if !cos {
                    continue;
                }
                let s = basis.partner(i);
                let bk = b[0] * S::c(k1 as f64) + b[1] * S::c(k2 as f64);
                entries.push((s, i, -bk));
                entries.push((i, s, bk));
            }
            Operator::Sparse(SparseMatrix::from_triplets(m, entries))
        })
        .collect();
    if g_lip > S::zero() {
        ops.push(Operator::Zero(m));
    }
    if ops.is_empty() {
        return Err(Error::InvalidParameter("need at least one noise mode (transport field or g_lip > 0)".into()));
    }
    let mut exponents = vec![Exponent::ints((1, 1), (3, 4))];
    if g_lip > S::zero() {
        exponents.push(Exponent::ints((0, 1), (3, 4)));
    }
    Ok((Ns2dPeriodic { nu, mu, g_lip, a0, b0: ColumnOperators { ops }, basis, exponents }, triple))
}

impl<S: FftScalar> Ns2dPeriodic<S> {
    pub fn nu(&self) -> S {
        self.nu
    }

    /// Transport constant `μ`.
    pub fn mu(&self) -> S {
        self.mu
    }

    pub fn basis(&self) -> &Solenoidal2d<S> {
        &self.basis
    }

    /// `Φ(u, v) = −P div(u ⊗ v)`.
    pub fn bilinear(&self, u: &[S], v: &[S]) -> Vec<S> {
        self.basis.bilinear(u, v)
    }

    /// `ℓ²` norm of the Fourier coefficients of `div u`.
    pub fn divergence_norm(&self, u: &[S]) -> S {
        self.basis.divergence_norm(u)
    }
}

impl<S: FftScalar> CoefficientPair<S> for Ns2dPeriodic<S> {
    fn name(&self) -> &str {
        "ns2d"
    }
    fn dim(&self) -> usize {
        self.a0.dim()
    }
    fn noise_dim(&self) -> usize {
        self.b0.cols()
    }
    fn a0(&self, _t: S, _u: &[S]) -> Cow<'_, Operator<S>> {
        Cow::Borrowed(&self.a0)
    }
    fn b0(&self, _t: S, _u: &[S]) -> Cow<'_, ColumnOperators<S>> {
        Cow::Borrowed(&self.b0)
    }
    fn is_semilinear(&self) -> bool {
        true
    }
    fn autonomous(&self) -> bool {
        true
    }
    fn drift(&self, _t: S, v: &[S], out: &mut [S]) {
        out.copy_from_slice(&self.basis.bilinear(v, v));
    }
    fn has_state_noise(&self) -> bool {
        self.g_lip > S::zero()
    }
    fn noise(&self, _t: S, v: &[S], out: &mut NoiseMatrix<S>) {
        out.fill_zero();
        if self.g_lip > S::zero() {
            let last = out.cols() - 1;
            for (o, &x) in out.column_mut(last).iter_mut().zip(v) {
                *o = self.g_lip * x;
            }
        }
    }
    fn exponents(&self) -> &[Exponent] {
        &self.exponents
    }
    fn drift_exponent_count(&self) -> usize {
        1
    }
    fn coercivity(&self) -> Coercivity<S> {
        Coercivity { theta: self.nu - self.mu, m: S::c(0.5) * self.g_lip * self.g_lip, phi: Phi::Constant(S::zero()) }
    }
    fn drift_jacobian_transpose(&self, _t: S, v: &[S], w: &[S], out: &mut [S]) -> bool {
        out.copy_from_slice(&self.basis.bilinear_adjoint(v, w));
        true
    }
    fn noise_jacobian_transpose(&self, _t: S, _v: &[S], psi: &[S], w: &[S], out: &mut [S]) -> bool {
        let c = if self.g_lip > S::zero() { self.g_lip * psi[psi.len() - 1] } else { S::zero() };
        for (o, &x) in out.iter_mut().zip(w) {
            *o = c * x;
        }
        true
    }
}
