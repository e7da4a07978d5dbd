use thiserror::Error;

/// Errors surfaced by the hedging engine and its configuration layer.
#[derive(Debug, Error)]
pub enum HedgeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {time} is not on the grid (h = {step})")]
    OffGrid { time: f64, step: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular system at step {step}, bin {bin}: {detail}")]
    Singular {
        step: usize,
        bin: usize,
        detail: String,
    },

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<HedgeError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HedgeError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        HedgeError::InvalidParameter(msg.into())
    }

    pub fn at_step(self, step: usize) -> Self {
        HedgeError::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, HedgeError>;
