//! Pseudo-spectral transforms between modal coefficients and nodal values.
//!
//! All transforms zero-pad so that the products the models need are
//! resolved without aliasing: cubic products in 1D (grid > 4K periodic,
//! > 2m Dirichlet) and quadratic products in 2D (grid > 3N).

use std::sync::Arc;

use num_complex::Complex;
use num_traits::Float;
use rustfft::{Fft, FftNum, FftPlanner};

use crate::scalar::Scalar;
use crate::triple::ModeLabel;

/// Scalars usable with the FFT backend.
pub trait FftScalar: Scalar + FftNum {}
impl<T: Scalar + FftNum> FftScalar for T {}

fn next_pow2_above(n: usize) -> usize {
    let mut p = 1;
    while p <= n {
        p <<= 1;
    }
    p
}

/// `√2 sin(kπx)`, `k = 1..=m`, on `[0, 1]`, sampled at `x_j = j/(n+1)`.
#[derive(Clone)]
pub struct SineTransform<S: FftScalar> {
    m: usize,
    n: usize,
    fft: Arc<dyn Fft<S>>,
}

impl<S: FftScalar> SineTransform<S> {
    pub fn new(m: usize) -> Self {
        // n + 1 > 2m resolves cubic products of m modes exactly
        let n1 = next_pow2_above(2 * m);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * n1);
        Self { m, n: n1 - 1, fft }
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    /// Quadrature weight of each node, `1/(n+1)`.
    pub fn weight(&self) -> S {
        S::from_usize_lossy(self.n + 1).recip()
    }

    /// `s_k = Σ_j x_j sin(πjk/(n+1))` for `k = 1..=len`, via an odd extension.
    fn sine_sums(&self, x: &[S], len: usize) -> Vec<S> {
        let n1 = self.n + 1;
        let mut buf = vec![Complex::new(S::zero(), S::zero()); 2 * n1];
        for (j, &v) in x.iter().enumerate() {
            buf[j + 1].re = v;
            buf[2 * n1 - (j + 1)].re = -v;
        }
        self.fft.process(&mut buf);
        let half = S::c(0.5);
        (1..=len).map(|k| -buf[k].im * half).collect()
    }

    pub fn to_nodal(&self, coeffs: &[S]) -> Vec<S> {
        debug_assert_eq!(coeffs.len(), self.m);
        let mut padded = vec![S::zero(); self.n];
        padded[..self.m].copy_from_slice(coeffs);
        let s2 = S::c(2.0).sqrt();
        self.sine_sums(&padded, self.n).into_iter().map(|v| v * s2).collect()
    }

    /// Projects nodal values onto the first `m` modes.
    pub fn project(&self, nodal: &[S]) -> Vec<S> {
        debug_assert_eq!(nodal.len(), self.n);
        let c = S::c(2.0).sqrt() * self.weight();
        self.sine_sums(nodal, self.m).into_iter().map(|v| v * c).collect()
    }
}

/// Real Fourier modes `√(2/L) cos(2πkx/L)`, `√(2/L) sin(2πkx/L)`,
/// `k = 1..=K`, interleaved as `[c₁, s₁, c₂, s₂, …]`.
#[derive(Clone)]
pub struct Fourier1d<S: FftScalar> {
    cutoff: usize,
    length: S,
    n: usize,
    forward: Arc<dyn Fft<S>>,
    inverse: Arc<dyn Fft<S>>,
}

impl<S: FftScalar> Fourier1d<S> {
    pub fn new(cutoff: usize, length: S) -> Self {
        let n = next_pow2_above(4 * cutoff);
        let mut planner = FftPlanner::new();
        Self {
            cutoff,
            length,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn cell(&self) -> S {
        self.length / S::from_usize_lossy(self.n)
    }

    fn amp(&self) -> S {
        (S::c(2.0) / self.length).sqrt()
    }

    pub fn to_nodal(&self, coeffs: &[S]) -> Vec<S> {
        debug_assert_eq!(coeffs.len(), 2 * self.cutoff);
        let a = self.amp();
        let mut buf = vec![Complex::new(S::zero(), S::zero()); self.n];
        for k in 1..=self.cutoff {
            buf[k] = Complex::new(a * coeffs[2 * k - 2], -a * coeffs[2 * k - 1]);
        }
        self.inverse.process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    pub fn project(&self, nodal: &[S]) -> Vec<S> {
        debug_assert_eq!(nodal.len(), self.n);
        let mut buf: Vec<Complex<S>> = nodal.iter().map(|&x| Complex::new(x, S::zero())).collect();
        self.forward.process(&mut buf);
        let c = self.amp() * self.cell();
        let mut out = Vec::with_capacity(2 * self.cutoff);
        for k in 1..=self.cutoff {
            out.push(c * buf[k].re);
            out.push(-c * buf[k].im);
        }
        out
    }
}

/// 2D FFT on an `M × M` row-major grid.
#[derive(Clone)]
struct Fft2<S: FftScalar> {
    m: usize,
    forward: Arc<dyn Fft<S>>,
    inverse: Arc<dyn Fft<S>>,
}

impl<S: FftScalar> Fft2<S> {
    fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { m, forward: planner.plan_fft_forward(m), inverse: planner.plan_fft_inverse(m) }
    }

    fn transpose(&self, buf: &mut [Complex<S>]) {
        let m = self.m;
        for r in 0..m {
            for c in r + 1..m {
                buf.swap(r * m + c, c * m + r);
            }
        }
    }

    fn run(&self, buf: &mut [Complex<S>], inverse: bool) {
        let fft = if inverse { &self.inverse } else { &self.forward };
        fft.process(buf);
        self.transpose(buf);
        fft.process(buf);
        self.transpose(buf);
    }
}

/// One divergence-free real Fourier mode `c·e_k·cos(k·x)` or `c·e_k·sin(k·x)`
/// with `e_k = k^⊥/|k|` and `c = 1/(π√2)` on the `2π`-torus.
#[derive(Debug, Clone, Copy)]
struct SolenoidalMode<S> {
    k1: i32,
    k2: i32,
    cos: bool,
    e: [S; 2],
}

/// Divergence-free Fourier basis ordered like a `periodic2d` triple.
/// Index 0 of the grid is `x = 0`; grid spacing `2π/M`.
#[derive(Clone)]
pub struct Solenoidal2d<S: FftScalar> {
    modes: Vec<SolenoidalMode<S>>,
    m_grid: usize,
    fft: Fft2<S>,
}

/// Nodal vector field: two row-major `M × M` component arrays.
pub type Field2<S> = [Vec<S>; 2];

impl<S: FftScalar> Solenoidal2d<S> {
    /// Builds the basis from the labels of a `periodic2d` triple.
    pub fn from_labels(labels: &[ModeLabel], cutoff: usize) -> Option<Self> {
        let mut modes = Vec::with_capacity(labels.len());
        for l in labels {
            let ModeLabel::Fourier2d { k1, k2, cos } = *l else {
                return None;
            };
            let r = S::c(((k1 * k1 + k2 * k2) as f64).sqrt());
            let e = [S::c(-(k2 as f64)) / r, S::c(k1 as f64) / r];
            modes.push(SolenoidalMode { k1, k2, cos, e });
        }
        let m_grid = next_pow2_above(3 * cutoff);
        Some(Self { modes, m_grid, fft: Fft2::new(m_grid) })
    }

    pub fn grid(&self) -> usize {
        self.m_grid
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    fn amp() -> S {
        (S::c(2.0).sqrt() * S::PI()).recip()
    }

    fn index(&self, k1: i32, k2: i32) -> usize {
        let m = self.m_grid as i32;
        let r = k1.rem_euclid(m) as usize;
        let c = k2.rem_euclid(m) as usize;
        // rows index x1, columns x2
        r * self.m_grid + c
    }

    /// Spectrum of one velocity component, optionally differentiated along
    /// axis `deriv`, on the full grid.
    fn spectrum(&self, coeffs: &[S], comp: usize, deriv: Option<usize>) -> Vec<Complex<S>> {
        let mut buf = vec![Complex::new(S::zero(), S::zero()); self.m_grid * self.m_grid];
        let a = Self::amp();
        for (mode, &x) in self.modes.iter().zip(coeffs) {
            if x == S::zero() {
                continue;
            }
            // cos ↦ Re(Z e^{ik·x}) with Z = 1, sin ↦ Z = -i
            let mut z = if mode.cos {
                Complex::new(a * mode.e[comp] * x, S::zero())
            } else {
                Complex::new(S::zero(), -a * mode.e[comp] * x)
            };
            if let Some(d) = deriv {
                let kd = S::c(if d == 0 { mode.k1 } else { mode.k2 } as f64);
                z = Complex::new(-z.im * kd, z.re * kd);
            }
            let i = self.index(mode.k1, mode.k2);
            buf[i] += z;
        }
        buf
    }

    fn synthesize(&self, mut spec: Vec<Complex<S>>) -> Vec<S> {
        self.fft.run(&mut spec, true);
        spec.into_iter().map(|z| z.re).collect()
    }

    pub fn to_nodal(&self, coeffs: &[S]) -> Field2<S> {
        [self.synthesize(self.spectrum(coeffs, 0, None)), self.synthesize(self.spectrum(coeffs, 1, None))]
    }

    /// `∂_axis u_comp` on the grid.
    pub fn derivative(&self, coeffs: &[S], comp: usize, axis: usize) -> Vec<S> {
        self.synthesize(self.spectrum(coeffs, comp, Some(axis)))
    }

    fn analyze(&self, nodal: &[S]) -> Vec<Complex<S>> {
        let mut buf: Vec<Complex<S>> = nodal.iter().map(|&x| Complex::new(x, S::zero())).collect();
        self.fft.run(&mut buf, false);
        buf
    }

    fn project_spectra(&self, spec: &[Vec<Complex<S>>; 2]) -> Vec<S> {
        let h = S::c(2.0) * S::PI() / S::from_usize_lossy(self.m_grid);
        let c = Self::amp() * h * h;
        self.modes
            .iter()
            .map(|mode| {
                let i = self.index(mode.k1, mode.k2);
                let dot = |f: fn(Complex<S>) -> S| mode.e[0] * f(spec[0][i]) + mode.e[1] * f(spec[1][i]);
                if mode.cos {
                    c * dot(|z| z.re)
                } else {
                    -c * dot(|z| z.im)
                }
            })
            .collect()
    }

    /// Leray-projects a nodal vector field onto the retained modes.
    pub fn project(&self, field: &Field2<S>) -> Vec<S> {
        let spec = [self.analyze(&field[0]), self.analyze(&field[1])];
        self.project_spectra(&spec)
    }

    /// `−P div(u ⊗ v)`, symmetrized as `½[Φ(u,v) + Φ(v,u)]` is not applied;
    /// this is the plain bilinear form.
    pub fn bilinear(&self, u: &[S], v: &[S]) -> Vec<S> {
        let un = self.to_nodal(u);
        let vn = self.to_nodal(v);
        let mg = self.m_grid as i64;
        // Q_ij = u_i v_j ; (div Q)_i = Σ_j ∂_j Q_ij
        let mut out_spec = [
            vec![Complex::new(S::zero(), S::zero()); self.m_grid * self.m_grid],
            vec![Complex::new(S::zero(), S::zero()); self.m_grid * self.m_grid],
        ];
        for i in 0..2 {
            for j in 0..2 {
                let q: Vec<S> = un[i].iter().zip(&vn[j]).map(|(&a, &b)| a * b).collect();
                let qh = self.analyze(&q);
                for (idx, z) in qh.into_iter().enumerate() {
                    let (r, c) = ((idx / self.m_grid) as i64, (idx % self.m_grid) as i64);
                    let kr = if r > mg / 2 { r - mg } else { r };
                    let kc = if c > mg / 2 { c - mg } else { c };
                    let kj = S::c(if j == 0 { kr } else { kc } as f64);
                    // −i k_j Q̂_ij
                    out_spec[i][idx] += Complex::new(z.im * kj, -z.re * kj);
                }
            }
        }
        self.project_spectra(&out_spec)
    }

    /// `P[(u·∇)μ + (∇μ)ᵀ u]`, the gradient in `w` of `⟨μ, Φ(w,u) + Φ(u,w)⟩`.
    pub fn bilinear_adjoint(&self, u: &[S], mu: &[S]) -> Vec<S> {
        let un = self.to_nodal(u);
        let grad: Vec<Vec<Vec<S>>> =
            (0..2).map(|i| (0..2).map(|j| self.derivative(mu, i, j)).collect()).collect();
        let n = self.m_grid * self.m_grid;
        let mut field: Field2<S> = [vec![S::zero(); n], vec![S::zero(); n]];
        for p in 0..n {
            for c in 0..2 {
                let mut acc = S::zero();
                for j in 0..2 {
                    // (u·∇)μ_c + Σ_i u_i ∂_c μ_i
                    acc += un[j][p] * grad[c][j][p] + un[j][p] * grad[j][c][p];
                }
                field[c][p] = acc;
            }
        }
        self.project(&field)
    }

    /// `ℓ²` norm of the Fourier coefficients of `div u`.
    pub fn divergence_norm(&self, coeffs: &[S]) -> S {
        let mut acc = S::zero();
        for (mode, &x) in self.modes.iter().zip(coeffs) {
            let d = (S::c(mode.k1 as f64) * mode.e[0] + S::c(mode.k2 as f64) * mode.e[1]) * x;
            acc += d * d;
        }
        Float::sqrt(acc)
    }

    /// `(k1, k2, cos)` of mode `i`.
    pub fn mode(&self, i: usize) -> (i32, i32, bool) {
        let m = &self.modes[i];
        (m.k1, m.k2, m.cos)
    }

    /// Index of the partner mode with the same wavevector (cos ↔ sin).
    pub fn partner(&self, i: usize) -> usize {
        if self.modes[i].cos {
            i + 1
        } else {
            i - 1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triple::SpectralTriple;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn sine_roundtrip_and_nodal_values() {
        let t = SineTransform::<f64>::new(5);
        let c = [0.3, -1.0, 0.0, 0.25, 2.0];
        let nodal = t.to_nodal(&c);
        let n = t.nodes();
        for (j, &v) in nodal.iter().enumerate() {
            let x = (j + 1) as f64 / (n + 1) as f64;
            let exact: f64 =
                c.iter().enumerate().map(|(k, &ck)| ck * 2f64.sqrt() * ((k + 1) as f64 * PI * x).sin()).sum();
            assert_relative_eq!(v, exact, epsilon = 1e-12);
        }
        let back = t.project(&nodal);
        for k in 0..5 {
            assert_relative_eq!(back[k], c[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn sine_cubic_is_dealiased() {
        // ∫ u⁴ by quadrature of the projected cube equals the fine quadrature
        let t = SineTransform::<f64>::new(4);
        let c = [1.0, -0.5, 0.3, 0.8];
        let u = t.to_nodal(&c);
        let cube: Vec<f64> = u.iter().map(|x| x * x * x).collect();
        let p = t.project(&cube);
        let pairing: f64 = p.iter().zip(&c).map(|(a, b)| a * b).sum();
        let fine = 20000;
        let quad: f64 = (1..fine)
            .map(|j| {
                let x = j as f64 / fine as f64;
                let v: f64 =
                    c.iter().enumerate().map(|(k, &ck)| ck * 2f64.sqrt() * ((k + 1) as f64 * PI * x).sin()).sum();
                v.powi(4)
            })
            .sum::<f64>()
            / fine as f64;
        assert_relative_eq!(pairing, quad, epsilon = 1e-9);
    }

    #[test]
    fn fourier1d_roundtrip() {
        let t = Fourier1d::<f64>::new(3, 2.0 * PI);
        let c = [1.0, 0.5, -0.25, 0.0, 0.1, 2.0];
        let u = t.to_nodal(&c);
        let h = t.cell();
        let x = 3.0 * h;
        let a = (1.0 / PI).sqrt();
        let exact = a
            * (1.0 * x.cos() + 0.5 * x.sin() - 0.25 * (2.0 * x).cos() + 0.1 * (3.0 * x).cos() + 2.0 * (3.0 * x).sin());
        assert_relative_eq!(u[3], exact, epsilon = 1e-12);
        let back = t.project(&u);
        for k in 0..6 {
            assert_relative_eq!(back[k], c[k], epsilon = 1e-12);
        }
        // Parseval
        let l2: f64 = u.iter().map(|v| v * v).sum::<f64>() * h;
        assert_relative_eq!(l2, c.iter().map(|v| v * v).sum::<f64>(), epsilon = 1e-12);
    }

    #[test]
    fn solenoidal_roundtrip_and_orthonormality() {
        let tr = SpectralTriple::<f64>::periodic2d(3).unwrap();
        let b = Solenoidal2d::<f64>::from_labels(tr.labels().unwrap(), 3).unwrap();
        let c: Vec<f64> = (0..b.dim()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let u = b.to_nodal(&c);
        let h = 2.0 * PI / b.grid() as f64;
        let l2: f64 = u[0].iter().chain(&u[1]).map(|v| v * v).sum::<f64>() * h * h;
        assert_relative_eq!(l2, c.iter().map(|v| v * v).sum::<f64>(), epsilon = 1e-10);
        let back = b.project(&u);
        for i in 0..b.dim() {
            assert_relative_eq!(back[i], c[i], epsilon = 1e-12);
        }
        assert!(b.divergence_norm(&c) < 1e-13);
    }
}
