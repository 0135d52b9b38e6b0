use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("invalid level {0}: expected a value in (0, 1]")]
    InvalidLevel(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value {value} in {context}")]
    NonFinite { context: String, value: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("nonpositive difficulty {0}")]
    NonpositiveDifficulty(f64),

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("quantile not unique at level {0}")]
    QuantileNotUnique(f64),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: msg.into(),
        }
    }

    /// Process exit code used by the command-line runner.
    ///
    /// 2 for configuration problems, 4 for numeric failures, 3 for
    /// everything data related.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::QuantileNotUnique(_) | Error::Singular(_) => 4,
            _ => 3,
        }
    }
}

pub(crate) fn ensure_finite(context: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&value) => Err(Error::NonFinite {
            context: context.to_string(),
            value,
        }),
        None => Ok(()),
    }
}
