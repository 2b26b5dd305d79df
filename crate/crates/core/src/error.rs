use std::path::PathBuf;

/// Errors raised by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is missing, malformed or out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two fields or meshes that must agree do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A nonlinear or iterative solve did not converge.
    #[error("solver failure in {stage} at step {step}: {detail}")]
    SolverFailure {
        stage: &'static str,
        step: u64,
        detail: String,
    },

    /// Non-finite or runaway values in the distribution functions.
    #[error("blow-up at step {step} (t = {time}): {detail}")]
    BlowUp { step: u64, time: f64, detail: String },

    /// A singular local operator was encountered.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Interpolation or statistics requested outside the available data.
    #[error("range error: {0}")]
    Range(String),

    /// An ensemble member failed.
    #[error("ensemble run {run} failed: {source}")]
    EnsembleRun {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
