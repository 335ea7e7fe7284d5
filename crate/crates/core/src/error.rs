use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input failed a structural check. `field` points at the offending part.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("exact expectation requires discrete distributions")]
    UnsupportedExact,

    #[error("{what} too large: {size} exceeds limit {limit}")]
    TooLarge {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("adversary contract violated: {0}")]
    AdversaryContractViolation(String),

    #[error("unsupported distribution family for {0}")]
    UnsupportedFamily(&'static str),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("adversary has no unpresented block left")]
    Exhausted,

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than by a failed run.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation { .. } | Error::UnsupportedExact | Error::UnsupportedFamily(_) => {
                true
            }
            Error::Trial { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
