use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("row {row} has no positive rating counts")]
    DegenerateRow { row: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("unknown protected attribute `{0}`")]
    UnknownAttribute(String),

    #[error("unknown category `{category}` for attribute `{attribute}`")]
    UnknownGroup { attribute: String, category: String },

    #[error("rate undefined for category `{0}`: no rows")]
    UndefinedRate(String),

    #[error("cannot fit: {0}")]
    Unfittable(String),

    #[error("label `{0}` has a single class")]
    DegenerateLabel(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs (bad flags, configs,
    /// column names) rather than by the data itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidScenario(_)
                | Error::UnknownColumn(_)
                | Error::UnknownAttribute(_)
                | Error::UnknownGroup { .. }
        )
    }
}
