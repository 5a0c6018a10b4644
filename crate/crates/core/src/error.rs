//! Error type for the whole crate.

/// Everything that can go wrong while building or running an agent.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is missing, malformed, or out of range.
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced NaN or infinity.
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    /// The behavior policy gives zero probability to the action taken.
    #[error("unsupported action under behavior: action {0} has probability 0")]
    UnsupportedAction(usize),

    /// Every trial of a batch failed, so there is nothing to summarize.
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    /// True for configuration errors (the CLI maps these to exit code 2).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
