//! Coefficient pairs `(A, B)` in quasilinear form
//!
//! ```text
//! A(t, v) = A₀(t, v) v − F(t, v) − f(t)
//! B(t, v) = B₀(t, v) v + G(t, v) + g(t)
//! ```
//!
//! together with checkers for the structural conditions: exact
//! (sub)criticality of the declared exponents, and randomized probes for
//! coercivity and local Lipschitz bounds.
//!
//! Conditions quantified over all of `V` cannot be decided numerically. The
//! probes search for counterexamples on a sample of `(t, v)` drawn with
//! independent Gaussian modes of standard deviation `λ_k^{-1/2}` plus a
//! single-mode spike, so both smooth and rough directions are exercised. A
//! probe result is a witness (when a condition fails) or empirical support
//! (when it holds on the sample), never a proof.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use num_rational::Ratio;
use num_traits::Num;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ColumnOperators, NoiseMatrix, Operator};
use crate::scalar::{dot, sub, Scalar};
use crate::triple::{Space, SpectralTriple};

/// Exact rational type used for declared exponents.
pub type Rational = Ratio<i64>;

/// Verdict of the (sub)criticality test `2β ≤ 1 + 1/(1+ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Critical,
    Violated,
}

/// Classifies one `(ρ, β)` pair.
///
/// The test is evaluated in the multiplied-out form `2β(1+ρ) ≤ 2+ρ`, which
/// only uses ring operations; with an exact type such as [`Rational`] the
/// equality case is decided without rounding.
pub fn classify_exponent<T>(rho: &T, beta: &T) -> Result<Criticality>
where
    T: Num + PartialOrd + Clone + fmt::Debug,
{
    let one = T::one();
    let two = one.clone() + one.clone();
    if *rho < T::zero() {
        return Err(Error::InvalidParameter(format!("rho = {rho:?} must be nonnegative")));
    }
    if !(two.clone() * beta.clone() > one && *beta < one) {
        return Err(Error::InvalidParameter(format!("beta = {beta:?} outside (1/2, 1)")));
    }
    let lhs = two.clone() * beta.clone() * (one + rho.clone());
    let rhs = two + rho.clone();
    Ok(if lhs == rhs {
        Criticality::Critical
    } else if lhs < rhs {
        Criticality::Subcritical
    } else {
        Criticality::Violated
    })
}

/// Declared growth/regularity exponent pair `(ρ_j, β_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exponent {
    pub rho: Rational,
    pub beta: Rational,
}

impl Exponent {
    pub fn new(rho: Rational, beta: Rational) -> Self {
        Self { rho, beta }
    }

    pub fn ints(rho: (i64, i64), beta: (i64, i64)) -> Self {
        Self::new(Rational::new(rho.0, rho.1), Rational::new(beta.0, beta.1))
    }

    /// Converts decimal inputs to the nearest small-denominator rational, so
    /// that `0.6666666666666666` is read as `2/3`.
    pub fn from_f64(rho: f64, beta: f64) -> Result<Self> {
        let conv = |x: f64| {
            Rational::approximate_float(x)
                .ok_or_else(|| Error::InvalidParameter(format!("cannot represent {x} as a rational")))
        };
        Ok(Self::new(conv(rho)?, conv(beta)?))
    }

    pub fn classify(&self) -> Result<Criticality> {
        classify_exponent(&self.rho, &self.beta)
    }

    pub fn rho_f<S: Scalar>(&self) -> S {
        S::c(*self.rho.numer() as f64 / *self.rho.denom() as f64)
    }

    pub fn beta_f<S: Scalar>(&self) -> S {
        S::c(*self.beta.numer() as f64 / *self.beta.denom() as f64)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(rho = {}, beta = {})", self.rho, self.beta)
    }
}

/// Per-entry verdicts for a list of exponents.
pub fn check_subcriticality(exponents: &[Exponent]) -> Result<Vec<Criticality>> {
    exponents.iter().map(Exponent::classify).collect()
}

/// The `φ` of the coercivity condition.
#[derive(Clone)]
pub enum Phi<S> {
    Constant(S),
    Profile(Arc<dyn Fn(S) -> S + Send + Sync>),
}

impl<S: Scalar> Phi<S> {
    pub fn at(&self, t: S) -> S {
        match self {
            Phi::Constant(c) => *c,
            Phi::Profile(f) => f(t),
        }
    }

    /// `‖φ‖²_{L²(0,T)}`; exact for constants, composite Simpson otherwise.
    pub fn l2_sq(&self, t_final: S) -> S {
        match self {
            Phi::Constant(c) => *c * *c * t_final,
            Phi::Profile(f) => {
                let n = 2048;
                let h = t_final / S::from_usize_lossy(n);
                let mut acc = S::zero();
                for i in 0..=n {
                    let w = if i == 0 || i == n {
                        S::one()
                    } else if i % 2 == 1 {
                        S::c(4.0)
                    } else {
                        S::c(2.0)
                    };
                    let y = f(h * S::from_usize_lossy(i));
                    acc += w * y * y;
                }
                acc * h / S::c(3.0)
            }
        }
    }
}

impl<S: fmt::Debug> fmt::Debug for Phi<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phi::Constant(c) => write!(f, "Phi::Constant({c:?})"),
            Phi::Profile(_) => write!(f, "Phi::Profile(..)"),
        }
    }
}

/// Declared constants `(θ, M, φ)` of
/// `⟨A(t,v),v⟩ − ½|||B(t,v)|||² ≥ θ‖v‖²_V − M‖v‖²_H − |φ(t)|²`.
#[derive(Debug, Clone)]
pub struct Coercivity<S> {
    pub theta: S,
    pub m: S,
    pub phi: Phi<S>,
}

impl<S: Scalar> Coercivity<S> {
    pub fn new(theta: S, m: S, phi: Phi<S>) -> Result<Self> {
        if !(theta > S::zero()) {
            return Err(Error::InvalidParameter(format!("theta = {theta} must be positive")));
        }
        if m < S::zero() {
            return Err(Error::InvalidParameter(format!("M = {m} must be nonnegative")));
        }
        Ok(Self { theta, m, phi })
    }
}

/// A coefficient pair `(A, B)` on a spectral triple with `K_U` noise modes.
///
/// Implementations must be pure functions of their arguments; the solvers
/// call them concurrently.
pub trait CoefficientPair<S: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Number of retained noise modes `K_U`.
    fn noise_dim(&self) -> usize;

    /// `A₀(t, u)`.
    fn a0(&self, t: S, u: &[S]) -> Cow<'_, Operator<S>>;

    /// `B₀(t, u)`, one operator per noise column.
    fn b0(&self, t: S, u: &[S]) -> Cow<'_, ColumnOperators<S>>;

    /// `true` when `A₀` and `B₀` do not depend on `u`.
    fn is_semilinear(&self) -> bool {
        false
    }

    /// `true` when `A₀` and `B₀` depend on neither `t` nor `u`, so solvers
    /// may factorize `I + ΔtA₀` once.
    fn autonomous(&self) -> bool {
        false
    }

    /// Writes `F(t, v)` into `out`.
    fn drift(&self, _t: S, _v: &[S], out: &mut [S]) {
        out.iter_mut().for_each(|x| *x = S::zero());
    }

    /// Writes `G(t, v)` into `out`.
    fn noise(&self, _t: S, _v: &[S], out: &mut NoiseMatrix<S>) {
        out.fill_zero();
    }

    /// Writes `f(t)` into `out`.
    fn forcing(&self, _t: S, out: &mut [S]) {
        out.iter_mut().for_each(|x| *x = S::zero());
    }

    /// Writes `g(t)` into `out`.
    fn additive_noise(&self, _t: S, out: &mut NoiseMatrix<S>) {
        out.fill_zero();
    }

    fn has_drift(&self) -> bool {
        true
    }

    fn has_state_noise(&self) -> bool {
        true
    }

    /// Exponents `(ρ_j, β_j)`: first the `m_F` entries bounding `F`, then the
    /// `m_G` entries bounding `G`.
    fn exponents(&self) -> &[Exponent] {
        &[]
    }

    /// `m_F`.
    fn drift_exponent_count(&self) -> usize {
        0
    }

    fn coercivity(&self) -> Coercivity<S>;

    /// `out = (∂_v F(t, v))ᵀ w`; return `false` when not provided.
    fn drift_jacobian_transpose(&self, _t: S, _v: &[S], _w: &[S], _out: &mut [S]) -> bool {
        false
    }

    /// `out = ∇_v ⟨w, G(t, v) ψ⟩`; return `false` when not provided.
    fn noise_jacobian_transpose(&self, _t: S, _v: &[S], _psi: &[S], _w: &[S], _out: &mut [S]) -> bool {
        false
    }

    /// `A(t, v) = A₀(t, v)v − F(t, v) − f(t)`.
    fn eval_a(&self, t: S, v: &[S]) -> Vec<S> {
        let m = v.len();
        let mut out = vec![S::zero(); m];
        self.a0(t, v).add_apply(S::one(), v, &mut out);
        let mut tmp = vec![S::zero(); m];
        if self.has_drift() {
            self.drift(t, v, &mut tmp);
            crate::scalar::axpy(-S::one(), &tmp, &mut out);
        }
        self.forcing(t, &mut tmp);
        crate::scalar::axpy(-S::one(), &tmp, &mut out);
        out
    }

    /// `B(t, v) = B₀(t, v)v + G(t, v) + g(t)`.
    fn eval_b(&self, t: S, v: &[S]) -> NoiseMatrix<S> {
        let mut out = NoiseMatrix::zeros(v.len(), self.noise_dim());
        let mut tmp = NoiseMatrix::zeros(v.len(), self.noise_dim());
        if self.has_state_noise() {
            self.noise(t, v, &mut out);
        }
        self.additive_noise(t, &mut tmp);
        out.add_scaled(S::one(), &tmp);
        self.b0(t, v).add_apply(v, &mut out);
        out
    }
}

/// `(A, s·B)`: the same pair with the noise coefficient scaled by `s`.
pub struct NoiseScaled<'a, S> {
    pub inner: &'a dyn CoefficientPair<S>,
    pub scale: S,
}

impl<S: Scalar> CoefficientPair<S> for NoiseScaled<'_, S> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn a0(&self, t: S, u: &[S]) -> Cow<'_, Operator<S>> {
        self.inner.a0(t, u)
    }
    fn b0(&self, t: S, u: &[S]) -> Cow<'_, ColumnOperators<S>> {
        let mut ops = self.inner.b0(t, u).into_owned();
        for op in ops.ops.iter_mut() {
            scale_operator(op, self.scale);
        }
        Cow::Owned(ops)
    }
    fn is_semilinear(&self) -> bool {
        self.inner.is_semilinear()
    }
    fn autonomous(&self) -> bool {
        self.inner.autonomous()
    }
    fn drift(&self, t: S, v: &[S], out: &mut [S]) {
        self.inner.drift(t, v, out)
    }
    fn noise(&self, t: S, v: &[S], out: &mut NoiseMatrix<S>) {
        self.inner.noise(t, v, out);
        let z = NoiseMatrix::zeros(out.rows(), out.cols());
        let copy = out.clone();
        *out = z;
        out.add_scaled(self.scale, &copy);
    }
    fn forcing(&self, t: S, out: &mut [S]) {
        self.inner.forcing(t, out)
    }
    fn additive_noise(&self, t: S, out: &mut NoiseMatrix<S>) {
        self.inner.additive_noise(t, out);
        let copy = out.clone();
        out.fill_zero();
        out.add_scaled(self.scale, &copy);
    }
    fn has_drift(&self) -> bool {
        self.inner.has_drift()
    }
    fn has_state_noise(&self) -> bool {
        self.inner.has_state_noise()
    }
    fn exponents(&self) -> &[Exponent] {
        self.inner.exponents()
    }
    fn drift_exponent_count(&self) -> usize {
        self.inner.drift_exponent_count()
    }
    fn coercivity(&self) -> Coercivity<S> {
        self.inner.coercivity()
    }
    fn drift_jacobian_transpose(&self, t: S, v: &[S], w: &[S], out: &mut [S]) -> bool {
        self.inner.drift_jacobian_transpose(t, v, w, out)
    }
    fn noise_jacobian_transpose(&self, t: S, v: &[S], psi: &[S], w: &[S], out: &mut [S]) -> bool {
        let scaled: Vec<S> = psi.iter().map(|&p| p * self.scale).collect();
        self.inner.noise_jacobian_transpose(t, v, &scaled, w, out)
    }
}

fn scale_operator<S: Scalar>(op: &mut Operator<S>, s: S) {
    let taken = std::mem::replace(op, Operator::Zero(0));
    *op = match taken {
        Operator::Zero(n) => Operator::Zero(n),
        Operator::Diagonal(d) => Operator::Diagonal(d.into_iter().map(|x| x * s).collect()),
        other => {
            // apply-by-columns to rebuild a dense operator
            let n = other.dim();
            let mut data = vec![S::zero(); n * n];
            let mut e = vec![S::zero(); n];
            for c in 0..n {
                e[c] = S::one();
                let col = other.apply(&e);
                for r in 0..n {
                    data[r * n + c] = s * col[r];
                }
                e[c] = S::zero();
            }
            Operator::Dense(crate::linalg::DenseMatrix::from_row_major(n, data).expect("square"))
        }
    };
}

/// Random direction in `V`: Gaussian modes with standard deviation
/// `λ_k^{-1/2}`, plus a single-mode spike; one draw in four is a pure spike.
pub fn sample_direction<S: Scalar, R: Rng + ?Sized>(triple: &SpectralTriple<S>, rng: &mut R) -> Vec<S> {
    let m = triple.dim();
    let lam = triple.eigenvalues();
    let pure_spike = rng.random_range(0..4) == 0;
    let mut v: Vec<S> = if pure_spike {
        vec![S::zero(); m]
    } else {
        lam.iter()
            .map(|&l| {
                let z: f64 = rng.sample(StandardNormal);
                S::c(z) / l.sqrt()
            })
            .collect()
    };
    let j = rng.random_range(0..m);
    let z: f64 = rng.sample(StandardNormal);
    let spike = if pure_spike { S::c(if z >= 0.0 { 1.0 } else { -1.0 }) } else { S::c(2.0 * z) };
    v[j] += spike / lam[j].sqrt();
    // heavy-tailed overall magnitude: 10^U(-2, 1)
    let mag = S::c(10f64.powf(rng.random_range(-2.0..1.0)));
    v.iter_mut().for_each(|x| *x *= mag);
    if triple.h(&v) == S::zero() {
        v[j] = S::one();
    }
    v
}

fn sample_in_ball<S: Scalar, R: Rng + ?Sized>(triple: &SpectralTriple<S>, radius: S, rng: &mut R) -> Vec<S> {
    let mut u = sample_direction(triple, rng);
    let h = triple.h(&u);
    let r = radius * S::c(rng.random_range(0.0..=1.0));
    u.iter_mut().for_each(|x| *x = *x * r / h);
    u
}

#[derive(Debug, Clone)]
pub struct ProbeSample<S> {
    pub t: S,
    pub u: Vec<S>,
    pub v: Vec<S>,
}

/// Draws `n` samples with `t ~ U[0, T]`, `u` in the `H`-ball of radius
/// `ball` and `v` from [`sample_direction`].
pub fn draw_samples<S: Scalar, R: Rng + ?Sized>(
    triple: &SpectralTriple<S>,
    t_final: S,
    ball: S,
    n: usize,
    rng: &mut R,
) -> Vec<ProbeSample<S>> {
    (0..n)
        .map(|_| {
            let t = t_final * S::c(rng.random_range(0.0..=1.0));
            let u = sample_in_ball(triple, ball, rng);
            let v = sample_direction(triple, rng);
            ProbeSample { t, u, v }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CoercivityProbe<S> {
    /// Minimum over the sample of the coercivity quotient.
    pub theta_hat: S,
    pub declared_theta: S,
    pub witness_t: S,
    pub witness_v: Vec<S>,
    pub n_samples: usize,
}

impl<S: Scalar> CoercivityProbe<S> {
    /// `θ̂ ≥ θ_declared − tol`.
    pub fn certifies(&self, tol: S) -> bool {
        self.theta_hat >= self.declared_theta - tol
    }

    /// `θ̂ < 0` exhibits a direction in which coercivity fails for every `θ > 0`.
    pub fn falsified(&self) -> bool {
        self.theta_hat < S::zero()
    }
}

fn argmin<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &q) in values.iter().enumerate() {
        if q < values[best] || q.is_nan() {
            best = i;
        }
    }
    best
}

fn check_pair<S: Scalar>(pair: &dyn CoefficientPair<S>, triple: &SpectralTriple<S>) -> Result<()> {
    crate::error::check_dim(triple.dim(), pair.dim())
}

/// Coercivity quotient of `(A, s·B)` at `(t, v)`:
/// `(⟨A(t,v),v⟩ − ½ s²|||B(t,v)|||² + M‖v‖²_H + |φ(t)|²) / ‖v‖²_V`.
pub fn coercivity_quotient<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    triple: &SpectralTriple<S>,
    noise_scale: S,
    t: S,
    v: &[S],
) -> S {
    let decl = pair.coercivity();
    let a = pair.eval_a(t, v);
    let b = pair.eval_b(t, v);
    let phi = decl.phi.at(t);
    let half = S::c(0.5);
    let num = dot(&a, v) - half * noise_scale * noise_scale * b.hs_norm_sq()
        + decl.m * triple.norm_sq_unchecked(v, Space::H)
        + phi * phi;
    num / triple.v_sq(v)
}

/// Evaluates the coercivity quotient of `(A, s·B)` on a fixed sample set.
pub fn probe_coercivity_ab_on<S: Scalar>(
    pair: &dyn CoefficientPair<S>,
    triple: &SpectralTriple<S>,
    samples: &[ProbeSample<S>],
    noise_scale: S,
) -> Result<CoercivityProbe<S>> {
    check_pair(pair, triple)?;
    if samples.is_empty() {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let q: Vec<S> = samples
        .par_iter()
        .map(|s| coercivity_quotient(pair, triple, noise_scale, s.t, &s.v))
        .collect();
    let i = argmin(&q);
    Ok(CoercivityProbe {
        theta_hat: q[i],
        declared_theta: pair.coercivity().theta,
        witness_t: samples[i].t,
        witness_v: samples[i].v.clone(),
        n_samples: samples.len(),
    })
}

/// Randomized falsification search for the coercivity of `(A, B)`.
pub fn probe_coercivity_ab<S: Scalar, R: Rng + ?Sized>(
    pair: &dyn CoefficientPair<S>,
    triple: &SpectralTriple<S>,
    t_final: S,
    n_samples: usize,
    rng: &mut R,
) -> Result<CoercivityProbe<S>> {
    let samples = draw_samples(triple, t_final, S::one(), n_samples, rng);
    probe_coercivity_ab_on(pair, triple, &samples, S::one())
}

#[derive(Debug, Clone)]
pub struct LeadingCoercivityProbe<S> {
    /// `θ̂_{n,T}` with the tested shift `M`.
    pub theta_hat: S,
    /// Same minimum without the `M‖v‖²_H` shift; the gap is the effect of `M`.
    pub theta_hat_unshifted: S,
    pub m_shift: S,
    pub witness_t: S,
    pub witness_u: Vec<S>,
    pub witness_v: Vec<S>,
}

/// Probe of `⟨A₀(t,u)v,v⟩ − ½|||B₀(t,u)v|||² ≥ θ_{n,T}‖v‖²_V − M_{n,T}‖v‖²_H`
/// over `‖u‖_H ≤ n`. The shift defaults to the pair's declared `M`.
pub fn probe_coercivity_a0b0<S: Scalar, R: Rng + ?Sized>(
    pair: &dyn CoefficientPair<S>,
    triple: &SpectralTriple<S>,
    radius: S,
    t_final: S,
    n_samples: usize,
    m_shift: Option<S>,
    rng: &mut R,
) -> Result<LeadingCoercivityProbe<S>> {
    check_pair(pair, triple)?;
    if !(radius > S::zero()) || n_samples == 0 {
        return Err(Error::InvalidParameter("need radius > 0 and at least one sample".into()));
    }
    let m_shift = m_shift.unwrap_or_else(|| pair.coercivity().m);
    let samples = draw_samples(triple, t_final, radius, n_samples, rng);
    let half = S::c(0.5);
    let parts: Vec<(S, S)> = samples
        .par_iter()
        .map(|s| {
            let a = pair.a0(s.t, &s.u).apply(&s.v);
            let b = pair.b0(s.t, &s.u).apply(&s.v);
            let vv = triple.v_sq(&s.v);
            let core = dot(&a, &s.v) - half * b.hs_norm_sq();
            let shifted = core + m_shift * triple.norm_sq_unchecked(&s.v, Space::H);
            (shifted / vv, core / vv)
        })
        .collect();
    let shifted: Vec<S> = parts.iter().map(|p| p.0).collect();
    let unshifted: Vec<S> = parts.iter().map(|p| p.1).collect();
    let i = argmin(&shifted);
    let j = argmin(&unshifted);
    Ok(LeadingCoercivityProbe {
        theta_hat: shifted[i],
        theta_hat_unshifted: unshifted[j],
        m_shift,
        witness_t: samples[i].t,
        witness_u: samples[i].u.clone(),
        witness_v: samples[i].v.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    A0,
    B0,
    F,
    G,
}

#[derive(Debug, Clone)]
pub struct LipschitzProbe<S> {
    /// Empirical `Ĉ_{n,T}` over the full sample.
    pub c_hat: S,
    /// Same maximum over the first half of the sample.
    pub c_hat_half: S,
    pub witness_t: S,
    pub witness_u: Vec<S>,
    pub witness_v: Vec<S>,
}

impl<S: Scalar> LipschitzProbe<S> {
    /// Relative growth of `Ĉ` when the sample size doubles.
    pub fn doubling_growth(&self) -> S {
        if self.c_hat == S::zero() {
            S::zero()
        } else {
            (self.c_hat - self.c_hat_half) / self.c_hat
        }
    }

    /// `Ĉ` changed by at most 10% under sample doubling.
    pub fn is_stable(&self) -> bool {
        self.doubling_growth() <= S::c(0.1)
    }
}

fn growth_sum<S: Scalar>(triple: &SpectralTriple<S>, exps: &[Exponent], u: &[S], v: &[S]) -> S {
    let d = sub(u, v);
    exps.iter()
        .map(|e| {
            let beta = Space::VBeta(e.beta_f::<S>());
            let rho = e.rho_f::<S>();
            let nu = triple.norm_sq_unchecked(u, beta).sqrt();
            let nv = triple.norm_sq_unchecked(v, beta).sqrt();
            (S::one() + nu.powf(rho) + nv.powf(rho)) * triple.norm_sq_unchecked(&d, beta).sqrt()
        })
        .sum()
}

/// Empirical local Lipschitz constant of one coefficient, i.e. the largest
/// sampled ratio of the left side of its Lipschitz bound to the right side
/// with `C = 1`. Pairs are drawn in the `H`-ball of radius `n` with the
/// second point a perturbation of the first at log-uniform scale.
pub fn probe_lipschitz<S: Scalar, R: Rng + ?Sized>(
    pair: &dyn CoefficientPair<S>,
    triple: &SpectralTriple<S>,
    which: Coefficient,
    radius: S,
    t_final: S,
    n_samples: usize,
    rng: &mut R,
) -> Result<LipschitzProbe<S>> {
    check_pair(pair, triple)?;
    if n_samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let m_f = pair.drift_exponent_count();
    let exps = pair.exponents();
    let (f_exps, g_exps) = exps.split_at(m_f.min(exps.len()));
    let m = triple.dim();
    let k = pair.noise_dim();

    struct Draw<S> {
        t: S,
        u: Vec<S>,
        v: Vec<S>,
        w: Vec<S>,
    }
    let draws: Vec<Draw<S>> = (0..n_samples)
        .map(|_| {
            let t = t_final * S::c(rng.random_range(0.0..=1.0));
            let u = sample_in_ball(triple, radius, rng);
            let mut d = sample_direction(triple, rng);
            let dh = triple.h(&d);
            let scale = S::c(10f64.powf(rng.random_range(-3.0..0.0))) * radius / dh;
            d.iter_mut().for_each(|x| *x *= scale);
            let mut v: Vec<S> = u.iter().zip(&d).map(|(&a, &b)| a + b).collect();
            let vh = triple.h(&v);
            if vh > radius {
                v.iter_mut().for_each(|x| *x = *x * radius / vh);
            }
            let w = sample_direction(triple, rng);
            Draw { t, u, v, w }
        })
        .collect();

    // A nonzero F or G with no declared exponents gives an infinite ratio,
    // reported as a structural violation below.
    let ratios: Vec<S> = draws
        .par_iter()
        .map(|d| {
            let ratio = match which {
                Coefficient::A0 => {
                    let du = triple.h(&sub(&d.u, &d.v));
                    let lhs = sub(&pair.a0(d.t, &d.u).apply(&d.w), &pair.a0(d.t, &d.v).apply(&d.w));
                    triple.vstar(&lhs) / (du * triple.v_sq(&d.w).sqrt())
                }
                Coefficient::B0 => {
                    let du = triple.h(&sub(&d.u, &d.v));
                    let mut bu = pair.b0(d.t, &d.u).apply(&d.w);
                    let bv = pair.b0(d.t, &d.v).apply(&d.w);
                    bu.add_scaled(-S::one(), &bv);
                    bu.hs_norm_sq().sqrt() / (du * triple.v_sq(&d.w).sqrt())
                }
                Coefficient::F => {
                    let mut fu = vec![S::zero(); m];
                    let mut fv = vec![S::zero(); m];
                    pair.drift(d.t, &d.u, &mut fu);
                    pair.drift(d.t, &d.v, &mut fv);
                    let lhs = triple.vstar(&sub(&fu, &fv));
                    if lhs == S::zero() {
                        S::zero()
                    } else {
                        lhs / growth_sum(triple, f_exps, &d.u, &d.v)
                    }
                }
                Coefficient::G => {
                    let mut gu = NoiseMatrix::zeros(m, k);
                    let mut gv = NoiseMatrix::zeros(m, k);
                    pair.noise(d.t, &d.u, &mut gu);
                    pair.noise(d.t, &d.v, &mut gv);
                    gu.add_scaled(-S::one(), &gv);
                    let lhs = gu.hs_norm_sq().sqrt();
                    if lhs == S::zero() {
                        S::zero()
                    } else {
                        lhs / growth_sum(triple, g_exps, &d.u, &d.v)
                    }
                }
            };
            if ratio.is_nan() {
                S::zero()
            } else {
                ratio
            }
        })
        .collect();

    let argmax = |r: &[S]| {
        let mut best = 0;
        for (i, &x) in r.iter().enumerate() {
            if x > r[best] {
                best = i;
            }
        }
        best
    };
    let i = argmax(&ratios);
    let half = &ratios[..n_samples / 2];
    let c_hat = ratios[i];
    if !c_hat.is_finite() {
        return Err(Error::Rejected {
            reason: format!("{which:?} is not bounded by its declared exponents"),
            witness: format!("t = {}", draws[i].t),
        });
    }
    Ok(LipschitzProbe {
        c_hat,
        c_hat_half: half[argmax(half)],
        witness_t: draws[i].t,
        witness_u: draws[i].u.clone(),
        witness_v: draws[i].v.clone(),
    })
}
