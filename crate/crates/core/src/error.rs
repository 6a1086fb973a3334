use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("interpolation parameter beta = {0} outside (1/2, 1)")]
    BetaOutOfRange(f64),

    #[error("zero vector has no interpolation ratio")]
    ZeroVector,

    #[error("linear solve failed at step {step}: {reason}")]
    LinearSolve { step: usize, reason: String },

    /// The fixed-point map could not be made contractive even on a single
    /// time step; the solution is suspected to blow up near `time`.
    #[error("fixed-point contraction failed at t = {time}: window shrank below one step (blow-up suspected)")]
    ContractionFailure { time: f64 },

    #[error("nonconvergence: {0}")]
    Nonconvergence(String),

    /// A model constructor rejected its parameters; `witness` names the
    /// violating direction or quantity.
    #[error("rejected: {reason} (witness: {witness})")]
    Rejected { reason: String, witness: String },

    #[error("missing Jacobian for {0} and finite-difference fallback disabled")]
    MissingJacobian(&'static str),

    #[error("insufficient Monte Carlo hits: {0}")]
    InsufficientHits(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
