use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is outside the domain of the operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration field failed validation.
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    /// The m_s = 0-like eigenvector could not be identified unambiguously.
    #[error(
        "free-Hamiltonian eigenbasis is ambiguous (best m_s overlap {overlap:.3} < 0.9); \
         field is outside the low-field validity range"
    )]
    AmbiguousEigenbasis { overlap: f64 },

    #[error("inner-product denominator vanishes at nu = {nu:.6e} rad/s (sum of cos^2 = {sum:.3e})")]
    DegenerateDenominator { nu: f64, sum: f64 },

    /// Rabi peaks merged or crossed, so the orientation labels cannot be assigned.
    #[error(
        "Rabi ordering violation: {0}; MW drift exceeds the tolerance that preserves \
         the ordering and separation of the four Rabi peaks"
    )]
    OrderingViolation(String),

    #[error("dynamic range exceeded: {0}")]
    DynamicRange(String),

    #[error("grid of {cells} cells exceeds the configured cap of {cap}")]
    GridTooLarge { cells: usize, cap: usize },

    #[error("singular problem: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::InvalidConfig { .. }
                | Error::DynamicRange(_)
                | Error::GridTooLarge { .. }
                | Error::Parse(_)
                | Error::Io(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
