use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix handed to an operation has the wrong size.
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix `{name}` has shape {found_rows}x{found_cols}, expected {rows}x{cols}")]
    Shape {
        name: String,
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("`{name}` contains a non-finite entry at index {index}")]
    NonFinite { name: String, index: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integration diverged at t = {time}")]
    Diverged { time: f64 },

    #[error(
        "fixed-point iteration did not contract within {iterations} iterations \
         (last step {last_step:.3e}{}); try a smaller gain alpha",
        sample.map(|k| format!(", sample {k}")).unwrap_or_default()
    )]
    Contraction {
        iterations: usize,
        last_step: f64,
        sample: Option<usize>,
    },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}:{line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the failing sample index to a contraction failure.
    pub fn at_sample(self, k: usize) -> Self {
        match self {
            Error::Contraction {
                iterations,
                last_step,
                ..
            } => Error::Contraction {
                iterations,
                last_step,
                sample: Some(k),
            },
            other => other,
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            found,
        })
    }
}
