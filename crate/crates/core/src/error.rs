use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the decomposition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("insufficient data: need at least {needed} correspondences, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("insufficient features{}: found {found} putative matches", pair_label(.pair))]
    InsufficientFeatures {
        found: usize,
        /// 1-based frame pair, when known.
        pair: Option<(usize, usize)>,
    },

    #[error("registration failed{}: {reason}", pair_label(.pair))]
    RegistrationFailure {
        reason: String,
        pair: Option<(usize, usize)>,
    },

    #[error("canvas of {pixels} pixels exceeds budget of {budget}")]
    CanvasTooLarge { pixels: usize, budget: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank {rank} must satisfy 1 <= rank < {min_dim}")]
    Rank { rank: usize, min_dim: usize },

    #[error("divergence at iteration {iteration}: non-finite entries in {component}")]
    Divergence {
        iteration: usize,
        component: &'static str,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("ingestion error in {}: {reason}", path.display())]
    Ingestion { path: PathBuf, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn pair_label(pair: &Option<(usize, usize)>) -> String {
    match pair {
        Some((a, b)) => format!(" for frame pair ({a},{b})"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a 1-based frame pair to registration-stage errors.
    pub fn with_pair(self, a: usize, b: usize) -> Self {
        match self {
            Error::InsufficientFeatures { found, .. } => Error::InsufficientFeatures {
                found,
                pair: Some((a, b)),
            },
            Error::RegistrationFailure { reason, .. } => Error::RegistrationFailure {
                reason,
                pair: Some((a, b)),
            },
            Error::InsufficientData { needed, got } => Error::RegistrationFailure {
                reason: format!("need {needed} correspondences, got {got}"),
                pair: Some((a, b)),
            },
            Error::Degenerate(reason) => Error::RegistrationFailure {
                reason,
                pair: Some((a, b)),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
