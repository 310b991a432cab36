//! Error type shared by every stage of the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    /// A transform was applied before the stage it depends on.
    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A pipeline stage failed; carries the stage name for diagnostics.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(other),
            },
        }
    }
}

impl Error {
    /// Process exit code used by the CLI: 2 config, 3 data, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Unsupported(_) => 2,
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::Stratification(_)
            | Error::Ordering(_)
            | Error::Selection(_)
            | Error::Undefined(_)
            | Error::Csv(_) => 3,
            Error::Numeric(_) => 4,
            Error::Io(_) | Error::Json(_) => 1,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
