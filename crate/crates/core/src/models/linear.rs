use std::borrow::Cow;

use crate::coeffs::{CoefficientPair, Coercivity, Phi};
use crate::error::{Error, Result};
use crate::linalg::{ColumnOperators, DenseMatrix, NoiseMatrix, Operator};
use crate::scalar::Scalar;
use crate::triple::SpectralTriple;

/// Linear SDE `dY = −aY dt + √ε σ dW` on `ℝⁿ` with the trivial triple
/// `V = H = ℝⁿ`.
#[derive(Debug, Clone)]
pub struct LinearSde<S> {
    a: Operator<S>,
    b0: ColumnOperators<S>,
    sigma: NoiseMatrix<S>,
    theta: S,
    phi: S,
}

/// Builds the pair and its trivial triple. The symmetric part of `a` must
/// be positive definite; the declared `θ` is its smallest eigenvalue and
/// `φ² = ½|||σ|||²`.
pub fn linear_sde<S: Scalar>(a: DenseMatrix<S>, sigma: NoiseMatrix<S>) -> Result<(LinearSde<S>, SpectralTriple<S>)> {
    let n = a.dim();
    crate::error::check_dim(n, sigma.rows())?;
    if sigma.cols() == 0 {
        return Err(Error::InvalidParameter("need at least one noise mode".into()));
    }
    let (vals, vecs) = a.symmetric_part().symmetric_eigen();
    let theta = vals[0];
    if !(theta > S::zero()) {
        let w: Vec<String> = (0..n).map(|r| format!("{:.6}", vecs.get(r, 0).f64())).collect();
        return Err(Error::Rejected {
            reason: format!("symmetric part of the drift matrix is not positive definite (λ_min = {theta})"),
            witness: format!("v = [{}]", w.join(", ")),
        });
    }
    let diagonal = (0..n).all(|r| (0..n).all(|c| r == c || a.get(r, c) == S::zero()));
    let op = if diagonal { Operator::Diagonal((0..n).map(|i| a.get(i, i)).collect()) } else { Operator::Dense(a) };
    let phi = (S::c(0.5) * sigma.hs_norm_sq()).sqrt();
    let k = sigma.cols();
    let triple = SpectralTriple::new(vec![S::one(); n])?;
    Ok((LinearSde { a: op, b0: ColumnOperators::zero(n, k), sigma, theta, phi }, triple))
}

/// Scalar Ornstein–Uhlenbeck process `dY = −aY dt + √ε σ dW`.
pub fn ou<S: Scalar>(a: S, sigma: S) -> Result<(LinearSde<S>, SpectralTriple<S>)> {
    let a = DenseMatrix::from_row_major(1, vec![a])?;
    let s = NoiseMatrix::from_columns(1, &[vec![sigma]])?;
    linear_sde(a, s)
}

impl<S: Scalar> LinearSde<S> {
    pub fn drift_operator(&self) -> &Operator<S> {
        &self.a
    }

    pub fn sigma(&self) -> &NoiseMatrix<S> {
        &self.sigma
    }
}

impl<S: Scalar> CoefficientPair<S> for LinearSde<S> {
    fn name(&self) -> &str {
        "linear_sde"
    }
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn noise_dim(&self) -> usize {
        self.sigma.cols()
    }
    fn a0(&self, _t: S, _u: &[S]) -> Cow<'_, Operator<S>> {
        Cow::Borrowed(&self.a)
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
    fn additive_noise(&self, _t: S, out: &mut NoiseMatrix<S>) {
        out.fill_zero();
        out.add_scaled(S::one(), &self.sigma);
    }
    fn has_drift(&self) -> bool {
        false
    }
    fn has_state_noise(&self) -> bool {
        false
    }
    fn coercivity(&self) -> Coercivity<S> {
        Coercivity { theta: self.theta, m: S::zero(), phi: Phi::Constant(self.phi) }
    }
    fn drift_jacobian_transpose(&self, _t: S, _v: &[S], _w: &[S], out: &mut [S]) -> bool {
        out.iter_mut().for_each(|x| *x = S::zero());
        true
    }
    fn noise_jacobian_transpose(&self, _t: S, _v: &[S], _psi: &[S], _w: &[S], out: &mut [S]) -> bool {
        out.iter_mut().for_each(|x| *x = S::zero());
        true
    }
}
