use std::io;

use thiserror::Error;

use crate::nn::checkpoint::CheckpointError;
use crate::nn::NnError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{field}: {reason}")]
    Config { field: String, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{0}")]
    Shape(String),
    #[error("epoch {epoch}, batch {batch}, {ae}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        ae: String,
        source: NnError,
    },
    #[error("stale dictionary {direction}: fitted on codes after {stamp} epochs, used in epoch {epoch}")]
    StaleDictionary {
        direction: String,
        stamp: usize,
        epoch: usize,
    },
    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("{class} class has {members} members, fewer than k = {k}; use a smaller k")]
    ClassTooSmall {
        class: &'static str,
        members: usize,
        k: usize,
    },
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("{0}")]
    Data(String),
    #[error("column '{0}' has zero variance in the training segment")]
    DegenerateColumn(String),
    #[error("segment of {len} steps is shorter than the required {needed}")]
    SegmentTooShort { len: usize, needed: usize },
    #[error("unsupported library schema version {0}")]
    SchemaVersion(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by invalid user input rather than a failure
    /// during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Parse { .. }
                | Error::SchemaVersion(_)
                | Error::Json(_)
                | Error::DegenerateColumn(_)
                | Error::SegmentTooShort { .. }
                | Error::ClassTooSmall { .. }
                | Error::Checkpoint(_)
        )
    }
}
