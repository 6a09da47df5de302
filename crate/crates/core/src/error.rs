use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A stream is shorter than a test or extractor requires.
    #[error("{what} requires at least {required} bits, got {actual}")]
    TooShort {
        what: String,
        required: usize,
        actual: usize,
    },

    /// An iterative estimator ran out of iterations.
    #[error("{method} did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Option<Box<crate::qmath::TwoQubitState>>,
    },

    /// Non-linear least squares fit of the HOM dip failed.
    #[error("HOM dip fit failed after {iterations} iterations: {reason} (chi2 = {chi2:.4e})")]
    FitFailed {
        reason: String,
        iterations: usize,
        chi2: f64,
    },

    #[error("no coincidences possible: detector efficiency is zero")]
    NoCoincidences,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
