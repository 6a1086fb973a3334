//! Diagonal (spectral) realization of a Gelfand triple `V ⊂ H ⊂ V*`.
//!
//! Every space is represented by coefficient vectors in one shared
//! orthonormal eigenbasis of `H`. With eigenvalues `λ_k > 0` the norms are
//! weighted ℓ² norms:
//!
//! | space      | weight `w_k`      |
//! |------------|-------------------|
//! | `H`        | 1                 |
//! | `V`        | λ_k               |
//! | `V*`       | λ_k⁻¹             |
//! | `V_β`      | λ_k^(2β−1)        |
//!
//! In this realization the interpolation estimate
//! `‖v‖_β ≤ K ‖v‖_H^(2−2β) ‖v‖_V^(2β−1)` holds with `K = 1` (Hölder on the
//! weights), which [`SpectralTriple::interpolation_ratio`] certifies.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Metadata attached to one basis mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeLabel {
    /// `√(2/L) sin(kπx/L)` on `[0, L]`.
    Sine { k: usize },
    /// Real Fourier mode on a 1D torus; `cos = true` selects the cosine.
    Fourier1d { k: usize, cos: bool },
    /// Real Fourier mode with wavevector `(k1, k2)` on the 2D torus.
    Fourier2d { k1: i32, k2: i32, cos: bool },
}

/// Which norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Space<S> {
    H,
    V,
    VStar,
    /// Complex interpolation space `[V*, V]_β`, `β ∈ (½, 1)`.
    VBeta(S),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTriple<S> {
    eigenvalues: Vec<S>,
    labels: Option<Vec<ModeLabel>>,
}

pub(crate) fn check_beta<S: Scalar>(beta: S) -> Result<()> {
    let half = S::c(0.5);
    if beta > half && beta < S::one() {
        Ok(())
    } else {
        Err(Error::BetaOutOfRange(beta.f64()))
    }
}

impl<S: Scalar> SpectralTriple<S> {
    pub fn new(eigenvalues: Vec<S>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidParameter("triple needs at least one mode".into()));
        }
        for (k, w) in eigenvalues.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::InvalidParameter(format!(
                    "eigenvalues must be nondecreasing (index {})",
                    k + 1
                )));
            }
        }
        if let Some(k) = eigenvalues.iter().position(|&l| !(l > S::zero()) || !l.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "eigenvalue {k} is not a positive finite number"
            )));
        }
        Ok(Self { eigenvalues, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<ModeLabel>) -> Result<Self> {
        check_dim(self.dim(), labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    /// Dirichlet Laplacian on `[0, L]`: `λ_k = (kπ/L)²`, `k = 1..=m`.
    pub fn dirichlet1d(m: usize, length: S) -> Result<Self> {
        if !(length > S::zero()) {
            return Err(Error::InvalidParameter("domain length must be positive".into()));
        }
        let eig = (1..=m)
            .map(|k| {
                let w = S::from_usize_lossy(k) * S::PI() / length;
                w * w
            })
            .collect();
        Self::new(eig)?.with_labels((1..=m).map(|k| ModeLabel::Sine { k }).collect())
    }

    /// Mean-free Laplacian on the torus of length `L` with wavenumbers
    /// `1..=cutoff`; each wavenumber contributes a cosine and a sine mode.
    pub fn periodic1d(cutoff: usize, length: S) -> Result<Self> {
        if !(length > S::zero()) {
            return Err(Error::InvalidParameter("domain length must be positive".into()));
        }
        let mut eig = Vec::with_capacity(2 * cutoff);
        let mut labels = Vec::with_capacity(2 * cutoff);
        for k in 1..=cutoff {
            let w = S::c(2.0) * S::PI() * S::from_usize_lossy(k) / length;
            for cos in [true, false] {
                eig.push(w * w);
                labels.push(ModeLabel::Fourier1d { k, cos });
            }
        }
        Self::new(eig)?.with_labels(labels)
    }

    /// `λ = |k|²` over nonzero integer wavevectors with `|k_i| ≤ cutoff`
    /// on the `2π`-torus, realized as cosine/sine pairs over a half plane.
    pub fn periodic2d(cutoff: usize) -> Result<Self> {
        let wave = half_plane_wavevectors(cutoff);
        let mut modes: Vec<(i64, ModeLabel)> = Vec::with_capacity(2 * wave.len());
        for &(k1, k2) in &wave {
            let l = (k1 as i64).pow(2) + (k2 as i64).pow(2);
            modes.push((l, ModeLabel::Fourier2d { k1, k2, cos: true }));
            modes.push((l, ModeLabel::Fourier2d { k1, k2, cos: false }));
        }
        // stable sort keeps the cos/sin pairing adjacent
        modes.sort_by_key(|m| m.0);
        let eig = modes.iter().map(|m| S::c(m.0 as f64)).collect();
        Self::new(eig)?.with_labels(modes.into_iter().map(|m| m.1).collect())
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[S] {
        &self.eigenvalues
    }

    pub fn labels(&self) -> Option<&[ModeLabel]> {
        self.labels.as_deref()
    }

    pub fn lambda_min(&self) -> S {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> S {
        self.eigenvalues[self.dim() - 1]
    }

    /// `‖v‖_H ≤ c ‖v‖_V` with `c = λ_1^{-1/2}`.
    pub fn embedding_v_to_h(&self) -> S {
        self.lambda_min().sqrt().recip()
    }

    /// `‖v‖_{V*} ≤ c ‖v‖_H` with `c = λ_1^{-1/2}`.
    pub fn embedding_h_to_vstar(&self) -> S {
        self.lambda_min().sqrt().recip()
    }

    pub fn weight(&self, k: usize, space: Space<S>) -> S {
        let l = self.eigenvalues[k];
        match space {
            Space::H => S::one(),
            Space::V => l,
            Space::VStar => l.recip(),
            Space::VBeta(beta) => l.powf(S::c(2.0) * beta - S::one()),
        }
    }

    pub fn check(&self, v: &[S]) -> Result<()> {
        check_dim(self.dim(), v.len())
    }

    /// Squared norm without validation; callers guarantee `v.len() == dim`.
    pub(crate) fn norm_sq_unchecked(&self, v: &[S], space: Space<S>) -> S {
        match space {
            Space::H => v.iter().map(|&x| x * x).sum(),
            Space::V => v.iter().zip(&self.eigenvalues).map(|(&x, &l)| l * x * x).sum(),
            Space::VStar => v.iter().zip(&self.eigenvalues).map(|(&x, &l)| x * x / l).sum(),
            Space::VBeta(beta) => {
                let p = S::c(2.0) * beta - S::one();
                v.iter().zip(&self.eigenvalues).map(|(&x, &l)| l.powf(p) * x * x).sum()
            }
        }
    }

    pub fn norm_sq(&self, v: &[S], space: Space<S>) -> Result<S> {
        self.check(v)?;
        if let Space::VBeta(beta) = space {
            check_beta(beta)?;
        }
        Ok(self.norm_sq_unchecked(v, space))
    }

    pub fn norm(&self, v: &[S], space: Space<S>) -> Result<S> {
        self.norm_sq(v, space).map(|s| s.sqrt())
    }

    pub(crate) fn h(&self, v: &[S]) -> S {
        self.norm_sq_unchecked(v, Space::H).sqrt()
    }

    pub(crate) fn v_sq(&self, v: &[S]) -> S {
        self.norm_sq_unchecked(v, Space::V)
    }

    pub(crate) fn vstar(&self, v: &[S]) -> S {
        self.norm_sq_unchecked(v, Space::VStar).sqrt()
    }

    /// `⟨w, v⟩` for `w ∈ V*`, `v ∈ V`; equals `(w, v)_H` when `w ∈ H`.
    pub fn duality_pair(&self, w: &[S], v: &[S]) -> Result<S> {
        self.check(w)?;
        self.check(v)?;
        Ok(crate::scalar::dot(w, v))
    }

    /// `‖v‖_β / (‖v‖_H^(2−2β) ‖v‖_V^(2β−1))`, bounded by one.
    pub fn interpolation_ratio(&self, v: &[S], beta: S) -> Result<S> {
        self.check(v)?;
        check_beta(beta)?;
        let h = self.h(v);
        if h == S::zero() {
            return Err(Error::ZeroVector);
        }
        let two = S::c(2.0);
        let vb = self.norm_sq_unchecked(v, Space::VBeta(beta)).sqrt();
        let vv = self.v_sq(v).sqrt();
        Ok(vb / (h.powf(two - two * beta) * vv.powf(two * beta - S::one())))
    }
}

/// Wavevectors `k ≠ 0` with `|k_i| ≤ n` in the half plane
/// `k2 > 0 or (k2 == 0 and k1 > 0)`.
pub(crate) fn half_plane_wavevectors(n: usize) -> Vec<(i32, i32)> {
    let n = n as i32;
    let mut out = Vec::new();
    for k2 in 0..=n {
        for k1 in -n..=n {
            if k2 > 0 || k1 > 0 {
                out.push((k1, k2));
            }
        }
    }
    out
}

/// Declarative triple description as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TripleSpec {
    Explicit { eigenvalues: Vec<f64> },
    #[serde(rename = "dirichlet1d")]
    Dirichlet1d {
        #[serde(default = "default_modes")]
        m: usize,
        #[serde(default = "unit_length")]
        length: f64,
    },
    #[serde(rename = "periodic1d")]
    Periodic1d { cutoff: usize, length: f64 },
    #[serde(rename = "periodic2d")]
    Periodic2d { cutoff: usize },
}

fn default_modes() -> usize {
    64
}

fn unit_length() -> f64 {
    1.0
}

impl TripleSpec {
    pub fn build<S: Scalar>(&self) -> Result<SpectralTriple<S>> {
        match self {
            TripleSpec::Explicit { eigenvalues } => {
                SpectralTriple::new(eigenvalues.iter().map(|&x| S::c(x)).collect())
            }
            TripleSpec::Dirichlet1d { m, length } => SpectralTriple::dirichlet1d(*m, S::c(*length)),
            TripleSpec::Periodic1d { cutoff, length } => {
                SpectralTriple::periodic1d(*cutoff, S::c(*length))
            }
            TripleSpec::Periodic2d { cutoff } => SpectralTriple::periodic2d(*cutoff),
        }
    }
}
