use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CobraError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CobraError {
    #[error("invalid split: k = {k} must satisfy 1 <= k <= n - 1 (n = {n})")]
    InvalidSplit { k: usize, n: usize },

    #[error("ensemble has no machines")]
    EmptyEnsemble,

    #[error("machine `{machine}` produced a non-finite prediction at row {row}")]
    MachineOutput { machine: String, row: usize },

    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no retained point reached consensus{}", query_suffix(.query))]
    NoConsensus { query: Option<usize> },

    #[error("machine weights must be nonnegative and sum to 1 (sum = {sum})")]
    InvalidWeights { sum: f64 },

    #[error("label error: {0}")]
    Label(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("cannot access {}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn query_suffix(query: &Option<usize>) -> String {
    match query {
        Some(q) => format!(" for query {q}"),
        None => String::new(),
    }
}

impl CobraError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CobraError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(what: &'static str, expected: usize, got: usize) -> Self {
        CobraError::Shape {
            what,
            expected,
            got,
        }
    }

    /// Attach a query index to a no-consensus error; other errors pass through.
    pub fn at_query(self, index: usize) -> Self {
        match self {
            CobraError::NoConsensus { .. } => CobraError::NoConsensus { query: Some(index) },
            other => other,
        }
    }

    pub fn is_no_consensus(&self) -> bool {
        matches!(self, CobraError::NoConsensus { .. })
    }
}
