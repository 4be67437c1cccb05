use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grouped data: {0}")]
    InvalidGrouped(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input contains no rows")]
    EmptyInput,

    #[error("negative distance {0}; reflection requires nonnegative values")]
    NegativeDistance(f64),

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("sample is empty")]
    EmptySample,

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("sample has zero variance; jitter grouped data before choosing a search range")]
    ZeroVariance,

    #[error("invalid search range: {0}")]
    InvalidRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{dropped} of {total} bootstrap replicates had a zero standard error (limit is 1%)")]
    DegenerateReplicates { dropped: usize, total: usize },

    #[error("unknown model id {0}; expected 1, 2, 3 or 4")]
    UnknownModel(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
