use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e} below threshold {threshold:e}")]
    NotPositive { eigenvalue: f64, threshold: f64 },

    #[error("Jacobi eigensolver did not converge within {cap} sweeps (off-diagonal norm {off_norm:e})")]
    NonConvergence { cap: usize, off_norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid depth: {0}")]
    InvalidDepth(String),

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("unknown packet node `{0}`")]
    UnknownNode(String),

    #[error("absolute continuity violated at node `{node}`: cylinder mass {mass:e} but vector weight {weight:e}")]
    AbsoluteContinuityViolation { node: String, mass: f64, weight: f64 },

    #[error("numerical breakdown at extraction step {step}: {source}")]
    NumericalBreakdown {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("coherence undefined: block HS mass {denominator:e} is at the zero floor")]
    UndefinedCoherence { denominator: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
