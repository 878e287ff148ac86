use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A CSV cell (or header) does not conform to the expected schema.
    #[error("{}:{line}: column `{column}`: {message}", file.display())]
    Schema {
        file: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("{}:{line}: duplicate row for asset `{asset}` on {date}", file.display())]
    DuplicateRow {
        file: PathBuf,
        line: u64,
        asset: String,
        date: String,
    },

    #[error("assets missing from the industry map: {}", .0.join(", "))]
    MissingIndustry(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient history: {what} needs index {needed}, earliest available is {available}")]
    Horizon {
        what: &'static str,
        needed: i64,
        available: i64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("scoring error: {0}")]
    Scoring(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("calendar alignment error: {0}")]
    Alignment(String),

    #[error("text provider failure: {0}")]
    Provider(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
