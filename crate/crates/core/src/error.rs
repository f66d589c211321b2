use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("duplicate eigenvalue {0} in source spectrum")]
    DuplicateEigenvalue(f64),

    #[error("eigenvalue {0} has zero multiplicity")]
    ZeroMultiplicity(f64),

    #[error("empty source spectrum")]
    EmptySpectrum,

    #[error("ordering does not match the spectrum: {0}")]
    OrderingMismatch(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("quadrature did not converge: {0}")]
    NonConvergence(String),

    #[error("condition number {condition:.3e} exceeds limit {limit:.3e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("matrix is singular to working precision")]
    Singular,

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("consistency failure: {0}")]
    Consistency(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
