use std::borrow::Cow;

use crate::coeffs::{CoefficientPair, Coercivity, Exponent, Phi};
use crate::error::{Error, Result};
use crate::linalg::{ColumnOperators, NoiseMatrix, Operator};
use crate::spectral::{FftScalar, SineTransform};
use crate::triple::SpectralTriple;

/// Allen–Cahn equation on `[0, 1]` with Dirichlet conditions:
/// `A₀ = −∂ₓₓ`, `F(u) = scale·(u − u³)`, additive noise `σ` on the first
/// `noise_modes` sine modes.
#[derive(Clone)]
pub struct AllenCahn1d<S: FftScalar> {
    scale: S,
    sigma: S,
    a0: Operator<S>,
    b0: ColumnOperators<S>,
    g: NoiseMatrix<S>,
    transform: SineTransform<S>,
    exponents: Vec<Exponent>,
}

/// Builds the pair on the Dirichlet triple with `m ≥ 8` modes.
pub fn allen_cahn1d<S: FftScalar>(
    m: usize,
    scale: S,
    sigma: S,
    noise_modes: usize,
) -> Result<(AllenCahn1d<S>, SpectralTriple<S>)> {
    if m < 8 {
        return Err(Error::InvalidParameter(format!("allen_cahn needs m ≥ 8, got {m}")));
    }
    if scale < S::zero() {
        return Err(Error::InvalidParameter(format!("scale must be nonnegative, got {scale}")));
    }
    if noise_modes == 0 || noise_modes > m {
        return Err(Error::InvalidParameter(format!("noise_modes must lie in 1..={m}, got {noise_modes}")));
    }
    let triple = SpectralTriple::dirichlet1d(m, S::one())?;
    let a0 = Operator::Diagonal(triple.eigenvalues().to_vec());
    let mut g = NoiseMatrix::zeros(m, noise_modes);
    for n in 0..noise_modes {
        g.column_mut(n)[n] = sigma;
    }
    let pair = AllenCahn1d {
        scale,
        sigma,
        a0,
        b0: ColumnOperators::zero(m, noise_modes),
        g,
        transform: SineTransform::new(m),
        exponents: vec![Exponent::ints((2, 1), (2, 3))],
    };
    Ok((pair, triple))
}

impl<S: FftScalar> AllenCahn1d<S> {
    pub fn scale(&self) -> S {
        self.scale
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }
}

impl<S: FftScalar> CoefficientPair<S> for AllenCahn1d<S> {
    fn name(&self) -> &str {
        "allen_cahn"
    }
    fn dim(&self) -> usize {
        self.a0.dim()
    }
    fn noise_dim(&self) -> usize {
        self.g.cols()
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
        let nodal = self.transform.to_nodal(v);
        let cube: Vec<S> = nodal.iter().map(|&x| x * x * x).collect();
        let p = self.transform.project(&cube);
        for ((o, &vi), c) in out.iter_mut().zip(v).zip(p) {
            *o = self.scale * (vi - c);
        }
    }
    fn has_state_noise(&self) -> bool {
        false
    }
    fn additive_noise(&self, _t: S, out: &mut NoiseMatrix<S>) {
        out.fill_zero();
        out.add_scaled(S::one(), &self.g);
    }
    fn exponents(&self) -> &[Exponent] {
        &self.exponents
    }
    fn drift_exponent_count(&self) -> usize {
        1
    }
    fn coercivity(&self) -> Coercivity<S> {
        let phi = (S::c(0.5) * self.g.hs_norm_sq()).sqrt();
        Coercivity { theta: S::one(), m: self.scale, phi: Phi::Constant(phi) }
    }
    fn drift_jacobian_transpose(&self, _t: S, v: &[S], w: &[S], out: &mut [S]) -> bool {
        let vn = self.transform.to_nodal(v);
        let wn = self.transform.to_nodal(w);
        let prod: Vec<S> = vn.iter().zip(&wn).map(|(&a, &b)| a * a * b).collect();
        let p = self.transform.project(&prod);
        for ((o, &wi), q) in out.iter_mut().zip(w).zip(p) {
            *o = self.scale * (wi - S::c(3.0) * q);
        }
        true
    }
    fn noise_jacobian_transpose(&self, _t: S, _v: &[S], _psi: &[S], _w: &[S], out: &mut [S]) -> bool {
        out.iter_mut().for_each(|x| *x = S::zero());
        true
    }
}
