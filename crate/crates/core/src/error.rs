use std::path::PathBuf;

use crate::nn::TrainLog;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no flood level for sample {0}")]
    MissingTheta(u64),

    #[error("degenerate probability: {0}")]
    DegenerateProbability(String),

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("auxiliary pipeline failed on fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        log: Box<TrainLog>,
    },

    #[error("bad checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad inputs or settings rather than a run
    /// that went wrong.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::TaskMismatch(_)
                | Error::Shape(_)
        )
    }
}
