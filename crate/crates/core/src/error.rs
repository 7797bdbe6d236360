use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state blew up at t = {time}")]
    IntegrationBlowUp { time: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("scheme {scheme} needs a stiff linear part, but the system has none")]
    MissingLinearPart { scheme: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("perturbed column {column} is not finite")]
    NonFiniteColumn { column: usize },

    #[error("frame is not orthonormal (max |QᵀQ - I| = {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("frame is rank deficient at column {column} (|r_ii| = {value:e})")]
    RankDeficient { column: usize, value: f64 },

    // The cause is part of the message rather than a `source`, so chained
    // reports do not print it twice.
    #[error("interval {interval}: {cause}")]
    AtInterval { interval: usize, cause: Box<Error> },

    #[error("divisor lambda_{index} is exactly zero")]
    DegenerateDivisor { index: usize },

    #[error("no records within {halfwidth} of L = {center}")]
    EmptyWindow { center: f64, halfwidth: f64 },

    #[error("least-squares design matrix is rank deficient")]
    SingularNormalEquations,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("stored fingerprint {stored} does not match plan fingerprint {expected}")]
    FingerprintMismatch { stored: String, expected: String },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_interval(self, interval: usize) -> Self {
        Error::AtInterval {
            interval,
            cause: Box::new(self),
        }
    }
}
