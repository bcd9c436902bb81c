use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}: expected {expected} columns, found {found}")]
    ColumnMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: cannot parse {value:?} as a finite number")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("row {row} has no observed features")]
    AllMissingRow { row: usize },

    #[error("row {row} has an empty label")]
    MissingLabel { row: usize },

    #[error(
        "cannot mask {requested} more entries: only {available} can be removed without emptying a row"
    )]
    MaskUnsatisfiable { requested: usize, available: usize },

    #[error("edge ({i}, {j}) is not materialized")]
    EdgeNotMaterialized { i: usize, j: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("non-finite loss at epoch {epoch}; last finite state retained")]
    NonFiniteLoss {
        epoch: usize,
        state: Box<crate::embedding::EmbeddingState>,
    },

    #[error("geodesic oracle failed to converge")]
    NotConverged,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no labeled nodes available for prediction")]
    NoLabeledNodes,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
