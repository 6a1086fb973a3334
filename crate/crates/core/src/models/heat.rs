use std::borrow::Cow;

use crate::coeffs::{CoefficientPair, Coercivity, Exponent, Phi};
use crate::error::{Error, Result};
use crate::linalg::{ColumnOperators, NoiseMatrix, Operator, SparseMatrix};
use crate::spectral::{FftScalar, Fourier1d};
use crate::triple::SpectralTriple;

/// Heat equation with transport noise on the `2π`-torus (mean-zero fields):
/// `A₀ = −ν∂ₓₓ`, noise mode 0 is `B₀u = b∂ₓu`, and when `g_lip > 0` noise
/// mode 1 is `G(u) = g_lip·P[sin u]`.
#[derive(Clone)]
pub struct Heat1dTransport<S: FftScalar> {
    nu: S,
    b: S,
    g_lip: S,
    a0: Operator<S>,
    b0: ColumnOperators<S>,
    transform: Fourier1d<S>,
    exponents: Vec<Exponent>,
}

/// Builds the pair on the periodic triple with `cutoff` wavenumbers
/// (`m = 2·cutoff` modes). Requires `b² < 2ν`.
pub fn heat1d_transport<S: FftScalar>(
    nu: S,
    b: S,
    g_lip: S,
    cutoff: usize,
) -> Result<(Heat1dTransport<S>, SpectralTriple<S>)> {
    if !(nu > S::zero()) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
    }
    if g_lip < S::zero() {
        return Err(Error::InvalidParameter(format!("g_lip must be nonnegative, got {g_lip}")));
    }
    if b * b >= S::c(2.0) * nu {
        return Err(Error::Rejected {
            reason: format!("transport noise too strong: b² = {} ≥ 2ν = {}", b * b, S::c(2.0) * nu),
            witness: "any mode e_k: ⟨A₀e_k,e_k⟩ − ½|||B₀e_k|||² = (ν − b²/2)λ_k ≤ 0".into(),
        });
    }
    let triple = SpectralTriple::periodic1d(cutoff, S::c(2.0) * S::PI())?;
    let m = triple.dim();
    let a0 = Operator::Diagonal(triple.eigenvalues().iter().map(|&l| nu * l).collect());
    // ∂ₓ cos(kx) = −k sin(kx), ∂ₓ sin(kx) = k cos(kx)
    let mut entries = Vec::with_capacity(m);
    for k in 1..=cutoff {
        let kk = S::from_usize_lossy(k) * b;
        let (c, s) = (2 * k - 2, 2 * k - 1);
        entries.push((s, c, -kk));
        entries.push((c, s, kk));
    }
    let mut ops = vec![Operator::Sparse(SparseMatrix::from_triplets(m, entries))];
    if g_lip > S::zero() {
        ops.push(Operator::Zero(m));
    }
    let exponents = if g_lip > S::zero() { vec![Exponent::ints((0, 1), (3, 4))] } else { Vec::new() };
    let pair = Heat1dTransport {
        nu,
        b,
        g_lip,
        a0,
        b0: ColumnOperators { ops },
        transform: Fourier1d::new(cutoff, S::c(2.0) * S::PI()),
        exponents,
    };
    Ok((pair, triple))
}

impl<S: FftScalar> Heat1dTransport<S> {
    pub fn nu(&self) -> S {
        self.nu
    }

    pub fn b(&self) -> S {
        self.b
    }
}

impl<S: FftScalar> CoefficientPair<S> for Heat1dTransport<S> {
    fn name(&self) -> &str {
        "heat1d"
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
    fn has_drift(&self) -> bool {
        false
    }
    fn has_state_noise(&self) -> bool {
        self.g_lip > S::zero()
    }
    fn noise(&self, _t: S, v: &[S], out: &mut NoiseMatrix<S>) {
        out.fill_zero();
        if self.g_lip > S::zero() {
            let nodal: Vec<S> = self.transform.to_nodal(v).into_iter().map(|x| x.sin()).collect();
            let p = self.transform.project(&nodal);
            for (o, x) in out.column_mut(1).iter_mut().zip(p) {
                *o = self.g_lip * x;
            }
        }
    }
    fn exponents(&self) -> &[Exponent] {
        &self.exponents
    }
    fn coercivity(&self) -> Coercivity<S> {
        let half = S::c(0.5);
        Coercivity { theta: self.nu - half * self.b * self.b, m: half * self.g_lip * self.g_lip, phi: Phi::Constant(S::zero()) }
    }
    fn drift_jacobian_transpose(&self, _t: S, _v: &[S], _w: &[S], out: &mut [S]) -> bool {
        out.iter_mut().for_each(|x| *x = S::zero());
        true
    }
    fn noise_jacobian_transpose(&self, _t: S, v: &[S], psi: &[S], w: &[S], out: &mut [S]) -> bool {
        if self.g_lip > S::zero() {
            let vn = self.transform.to_nodal(v);
            let wn = self.transform.to_nodal(w);
            let prod: Vec<S> = vn.iter().zip(&wn).map(|(&a, &b)| a.cos() * b).collect();
            let p = self.transform.project(&prod);
            let c = self.g_lip * psi[1];
            for (o, x) in out.iter_mut().zip(p) {
                *o = c * x;
            }
        } else {
            out.iter_mut().for_each(|x| *x = S::zero());
        }
        true
    }
}
