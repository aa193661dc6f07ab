use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("regularized Gram matrix is not numerically positive definite (lambda_eff = {lambda_eff:e})")]
    FactorizationFailure { lambda_eff: f64 },

    #[error("negative variance {radicand:e} while estimating mu2")]
    NegativeVariance { radicand: f64 },

    #[error("hinge solver did not reach tolerance {tolerance:e} within {epochs} epochs (gap {gap:e})")]
    SolverDivergence { epochs: usize, gap: f64, tolerance: f64 },

    #[error("mu0 is undefined: |omega^T 1| = {sum:e} is below 1e-12")]
    DegenerateMu0 { sum: f64 },

    #[error("every grid point failed ({points} points)")]
    AllPointsFailed { points: usize },

    #[error("split would leave the {0} set empty")]
    InsufficientSamples(&'static str),

    #[error("label {label} on line {line} is not -1 or 1")]
    LabelError { label: f64, line: usize },

    #[error("{path}:{line}: {message}")]
    FormatError {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("model {0} has no paired Gaussian-equivalent row")]
    MissingPair(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by bad user input rather than numerical or IO failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::DimensionMismatch(_)
                | Error::LabelError { .. }
                | Error::FormatError { .. }
                | Error::InsufficientSamples(_)
                | Error::Json(_)
        )
    }
}
