//! Shipped coefficient pairs.
//!
//! | config name  | equation                                            |
//! |--------------|-----------------------------------------------------|
//! | `ou`         | linear SDE on `ℝⁿ`                                  |
//! | `heat1d`     | periodic heat equation with transport noise         |
//! | `allen_cahn` | Dirichlet Allen–Cahn with additive noise (critical) |
//! | `ns2d`       | 2D Navier–Stokes on the torus with transport noise  |

mod allen_cahn;
mod heat;
mod linear;
mod ns2d;

pub use allen_cahn::{allen_cahn1d, AllenCahn1d};
pub use heat::{heat1d_transport, Heat1dTransport};
pub use linear::{linear_sde, ou, LinearSde};
pub use ns2d::{ns2d_periodic, Ns2dPeriodic};

use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientPair;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, NoiseMatrix};
use crate::spectral::FftScalar;
use crate::triple::SpectralTriple;

/// A model as named in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `a` is the row-major drift matrix, `sigma` the column-major `n × K_U`
    /// diffusion matrix.
    Ou {
        #[serde(default = "one_vec")]
        a: Vec<f64>,
        #[serde(default = "one_vec")]
        sigma: Vec<f64>,
        #[serde(default = "one")]
        n: usize,
    },
    Heat1d {
        #[serde(default = "one_f")]
        nu: f64,
        #[serde(default = "one_f")]
        b: f64,
        #[serde(default)]
        g_lip: f64,
        #[serde(default = "heat_cutoff")]
        cutoff: usize,
    },
    AllenCahn {
        #[serde(default = "ac_modes")]
        m: usize,
        #[serde(default = "one_f")]
        scale: f64,
        #[serde(default = "one_f")]
        sigma: f64,
        #[serde(default = "ac_noise")]
        noise_modes: usize,
    },
    Ns2d {
        #[serde(default = "one_f")]
        nu: f64,
        #[serde(default = "ns_cutoff")]
        cutoff: usize,
        #[serde(default = "ns_fields")]
        b_fields: Vec<[f64; 2]>,
        #[serde(default)]
        g_lip: f64,
    },
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn one_vec() -> Vec<f64> {
    vec![1.0]
}
fn heat_cutoff() -> usize {
    16
}
fn ac_modes() -> usize {
    32
}
fn ac_noise() -> usize {
    4
}
fn ns_cutoff() -> usize {
    8
}
fn ns_fields() -> Vec<[f64; 2]> {
    vec![[0.5, 0.0], [0.0, 0.5]]
}

/// A built model: the pair and its triple.
pub struct Model<S: FftScalar> {
    pub pair: Box<dyn CoefficientPair<S>>,
    pub triple: SpectralTriple<S>,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Ou { .. } => "ou",
            ModelSpec::Heat1d { .. } => "heat1d",
            ModelSpec::AllenCahn { .. } => "allen_cahn",
            ModelSpec::Ns2d { .. } => "ns2d",
        }
    }

    pub fn build<S: FftScalar>(&self) -> Result<Model<S>> {
        let c = |x: f64| S::c(x);
        Ok(match self {
            ModelSpec::Ou { a, sigma, n } => {
                let n = *n;
                if n == 0 || a.len() != n * n || sigma.is_empty() || sigma.len() % n != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "ou: need a with n² = {} entries and sigma with a multiple of n = {n} entries",
                        n * n
                    )));
                }
                let am = DenseMatrix::from_row_major(n, a.iter().map(|&x| c(x)).collect())?;
                let cols: Vec<Vec<S>> = sigma.chunks(n).map(|ch| ch.iter().map(|&x| c(x)).collect()).collect();
                let (pair, triple) = linear_sde(am, NoiseMatrix::from_columns(n, &cols)?)?;
                Model { pair: Box::new(pair), triple }
            }
            ModelSpec::Heat1d { nu, b, g_lip, cutoff } => {
                let (pair, triple) = heat1d_transport(c(*nu), c(*b), c(*g_lip), *cutoff)?;
                Model { pair: Box::new(pair), triple }
            }
            ModelSpec::AllenCahn { m, scale, sigma, noise_modes } => {
                let (pair, triple) = allen_cahn1d(*m, c(*scale), c(*sigma), *noise_modes)?;
                Model { pair: Box::new(pair), triple }
            }
            ModelSpec::Ns2d { nu, cutoff, b_fields, g_lip } => {
                let fields: Vec<[S; 2]> = b_fields.iter().map(|b| [c(b[0]), c(b[1])]).collect();
                let (pair, triple) = ns2d_periodic(c(*nu), *cutoff, &fields, c(*g_lip))?;
                Model { pair: Box::new(pair), triple }
            }
        })
    }
}
