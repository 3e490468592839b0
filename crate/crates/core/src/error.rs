use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unstable queue: rho = {rho} must be < 1")]
    Unstable { rho: f64 },

    #[error("moment of order {k} is out of range for {dist}")]
    MomentOutOfRange { k: u32, dist: String },

    #[error("fixed-point iteration did not converge after {iterations} steps (last iterate {last})")]
    IterationLimit { iterations: usize, last: f64 },

    #[error("series truncation failed: achieved bound {achieved:e} after {terms} terms")]
    Truncation { achieved: f64, terms: usize },

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("horizon {horizon} is shorter than the required {required}")]
    HorizonTooShort { horizon: f64, required: f64 },

    #[error("cycle exceeded the event cap of {cap} arrivals")]
    EventCap { cap: usize },

    #[error("cannot fit decay rate: {0}")]
    Unfit(String),

    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(input: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            input: input.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
