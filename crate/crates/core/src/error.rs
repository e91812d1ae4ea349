use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("log-distance {0} is outside the mined bucket range 239..=255")]
    DistanceOutOfRange(u16),

    #[error("mining for distance {distance} gave up after {attempts} attempts")]
    MiningCapExceeded { distance: u8, attempts: u64 },

    #[error("a node cannot be stored in its own table")]
    SelfRecord,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid node id: {0}")]
    InvalidNodeId(String),

    #[error("malformed pool file: {0}")]
    PoolFormat(String),

    #[error("lookup did not converge within {0} rounds")]
    LookupDiverged(usize),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
