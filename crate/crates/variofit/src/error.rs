//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by estimators, divergences, solvers and the GP core.
#[derive(Debug, Error)]
pub enum Error {
    /// A kernel/PSD parameter is outside its domain (e.g. non-positive scale).
    #[error("parameter domain violation: {0}")]
    ParameterDomain(String),

    /// An input argument is malformed (wrong length, out of range, non-finite).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Not enough data survived binning/segmentation to estimate anything.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A spectral estimate carries no mass, so no quantile function exists.
    #[error("degenerate spectrum: total mass is zero")]
    DegenerateSpectrum,

    /// KL/IS support containment violated and the epsilon floor is disabled.
    #[error("support violation: first density has mass where second is zero")]
    SupportViolation,

    /// The exact Wasserstein solver produced a non-positive scale.
    ///
    /// Surfaced rather than clamped; the diagnostics carry the raw solution
    /// so a caller can fall back to the general solver.
    #[error("exact solver produced non-positive scale sigma*={sigma_star} (mu*={mu_star})")]
    ScaleNotPositive { mu_star: f64, sigma_star: f64 },

    /// Cholesky factorisation failed even after the jitter escalation.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// An I/O or CSV parsing problem.
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
