use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant. `field` names the offending entry.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("input outside the supported domain: {0}")]
    Domain(String),

    #[error("unsupported derivative direction ({0}, {1}); only axis directions are implemented")]
    UnsupportedDirection(f64, f64),

    #[error("non-finite value in loss term `{term}`")]
    NumericOverflow { term: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("singular tridiagonal system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    /// All residuals are zero and the PMF offset is zero, so no distribution exists.
    #[error("degenerate sampling distribution: {0}")]
    DegenerateDistribution(String),

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("output directory {0} already contains run artifacts")]
    OutputExists(PathBuf),

    /// A verification gate did not hold.
    #[error("check failed: {0}")]
    Acceptance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    TomlWrite(#[from] toml::ser::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors that stem from numerics rather than from user input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericOverflow { .. }
                | Error::Numeric(_)
                | Error::SingularSystem { .. }
                | Error::DegenerateDistribution(_)
                | Error::DegenerateReference(_)
        )
    }

    /// Process exit status: 1 for bad input, 2 for numeric failure, 3 for a failed check.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Acceptance(_) => 3,
            e if e.is_numeric() => 2,
            _ => 1,
        }
    }
}
