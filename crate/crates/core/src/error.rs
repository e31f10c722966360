use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("population is empty")]
    EmptyPopulation,

    /// `position` is 1-based.
    #[error("item {position} has invalid probability {value}")]
    InvalidProbability { position: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("set violates the bounded ratio condition: max/min = {ratio} > gamma = {gamma}")]
    RatioViolated { ratio: f64, gamma: f64 },

    #[error("search set has zero total probability")]
    DegenerateSet,

    #[error("no retained items; bounds are undefined")]
    DegeneratePartition,

    #[error("oracle answered {outcome} for a query whose outcome was already implied otherwise")]
    OracleInconsistent { outcome: bool },

    #[error("test budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },

    #[error("enumeration over {items} items exceeds the cap of {cap}")]
    TooLarge { items: usize, cap: usize },

    #[error("no records to aggregate")]
    EmptyInput,

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
