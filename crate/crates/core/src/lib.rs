//! Large deviations for stochastic evolution equations in the critical
//! variational setting, at desk scale.
//!
//! The crate is generic over the real scalar type; the aliases below fix it
//! to `f64`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the component formulas of the schemes.
#![allow(clippy::needless_range_loop)]

pub mod action;
pub mod coeffs;
pub mod error;
pub mod io;
pub mod ldp;
pub mod linalg;
pub mod lq;
pub mod models;
pub mod optim;
pub mod path;
pub mod rng;
pub mod sde;
pub mod scalar;
pub mod skeleton;
pub mod spectral;
pub mod stats;
pub mod triple;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Triple = triple::SpectralTriple<f64>;
pub type Grid = path::TimeGrid<f64>;
pub type Control = path::Control<f64>;
pub type Trajectory = path::Trajectory<f64>;
pub type Model = models::Model<f64>;
