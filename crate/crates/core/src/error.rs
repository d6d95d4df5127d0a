use thiserror::Error;

/// Errors raised across the test pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A model coefficient or integrand produced a non-finite or invalid value.
    #[error("evaluation failed at x = {x}: {what}")]
    Evaluation { x: f64, what: String },

    /// The drift/diffusion pair does not define a positive recurrent process.
    #[error("ergodicity failure: {0}")]
    Ergodicity(String),

    /// An argument fell outside the admissible range of an operation.
    #[error("argument {value} outside admissible range [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    /// A matrix that must be positive definite is (numerically) singular.
    #[error("nondegeneracy violated: {0}")]
    Nondegenerate(String),

    /// A simulated path left the plausible state range.
    #[error("path exploded at step {step} (x = {value}); dt may be too large or the model non-ergodic")]
    Explosion { step: usize, value: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    /// Too many replications failed for the experiment to be meaningful.
    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in per-replication failure columns.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Evaluation { .. } => "evaluation",
            Error::Ergodicity(_) => "ergodicity",
            Error::Domain { .. } => "domain",
            Error::Nondegenerate(_) => "nondegenerate",
            Error::Explosion { .. } => "explosion",
            Error::Fit(_) => "fit",
            Error::Invalid(_) => "invalid",
            Error::Config { .. } => "config",
            Error::Experiment(_) => "experiment",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
