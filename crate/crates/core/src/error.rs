use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("non-positive distance {0} m")]
    NonPositiveDistance(f64),

    #[error("amplification factor undefined: {0}")]
    Amplification(String),

    #[error("mode mismatch: expected {expected}, got {got}")]
    ModeMismatch { expected: String, got: String },

    #[error("high-power limit needs at least two pairs (got K = {0})")]
    UnboundedRate(usize),

    #[error("direct links must be blocked for this expression")]
    DirectLinksPresent,

    #[error("single-pair scaling law requires {0}")]
    ScalingPrecondition(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("unknown builtin experiment `{0}`")]
    UnknownBuiltin(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("toml parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
