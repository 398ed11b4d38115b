use thiserror::Error;

/// Errors raised by the library operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid array: {0}")]
    InvalidArray(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point lies {distance:.3e} m from an array element")]
    SourceOnArray { distance: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("reference channel has zero norm")]
    ZeroTruth,
    #[error("measurement operator has rank {rank} but {unknowns} unknowns")]
    RankDeficient { rank: usize, unknowns: usize },
    #[error("beam sweep needs {needed} slots but the pilot budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("no path detected above the residual-reduction threshold")]
    NoPathDetected,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("{0} policy requires a prior position")]
    MissingPrior(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
