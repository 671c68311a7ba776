//! Error type shared by all modules.

/// Broad error category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad configuration or parameters supplied by the caller.
    Config,
    /// Problems with input data (files, columns, shapes).
    Data,
    /// Numeric failures detected while computing.
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric value `{value}` at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("binary violation at row {row}: column `{column}` has value {value}, expected 0 or 1")]
    BinaryViolation {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("dataset has no rows")]
    EmptyData,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid fold count K={k} for n={n}; need 2 <= K <= n")]
    BadFoldCount { k: usize, n: usize },
    #[error("degenerate training folds for held-out fold {fold}: {reason}")]
    DegenerateFold { fold: usize, reason: String },
    #[error("nuisance target `{0}` was not fitted")]
    MissingNuisance(&'static str),
    #[error("target `{target}` unavailable: {reason}")]
    TargetUnavailable {
        target: &'static str,
        reason: String,
    },
    #[error(
        "weak instrument: |delta_hat| < {delta_min} at {count} observation(s), first indices {indices:?}"
    )]
    WeakInstrument {
        delta_min: f64,
        count: usize,
        indices: Vec<usize>,
    },
    #[error("sigma_w must be positive; found {value} at index {index}")]
    NonPositiveSigma { index: usize, value: f64 },
    #[error("policy feature mask is empty")]
    EmptyMask,
    #[error("feature index {index} out of range for {p} features")]
    FeatureOutOfRange { index: usize, p: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("instance exceeds brute-force guard rails: {0}")]
    BruteForceGuard(String),
    #[error("invalid policy: {0}")]
    BadPolicy(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            BadFoldCount { .. } | InvalidParam(_) | BruteForceGuard(_) | EmptyMask
            | MissingNuisance(_) | TargetUnavailable { .. } => ErrorCategory::Config,
            MissingColumn(_) | NonNumeric { .. } | BinaryViolation { .. } | EmptyData
            | LengthMismatch(_) | FeatureOutOfRange { .. } | BadPolicy(_) | Io(_) | Csv(_)
            | Json(_) => ErrorCategory::Data,
            DegenerateFold { .. } | WeakInstrument { .. } | NonPositiveSigma { .. }
            | NonFiniteScore(_) => ErrorCategory::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
