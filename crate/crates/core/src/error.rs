use std::path::PathBuf;

/// Errors raised by the library.
///
/// `Contract` marks a violated precondition (mismatched shapes, bad
/// arguments); the remaining variants are genuine runtime failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("unknown environment `{0}` (expected `frozenlake` or `trafficlight`)")]
    UnknownEnv(String),

    #[error("rectifier kink crossed after {halvings} halvings: unit {unit} of layer {layer} flips at state {state}")]
    KinkCrossing {
        halvings: usize,
        layer: usize,
        unit: usize,
        state: usize,
    },

    #[error("{dir}: missing parameter snapshots for steps {steps:?}")]
    MissingSnapshots { dir: PathBuf, steps: Vec<u64> },

    #[error("hook failed at iteration {iteration}: {message}")]
    Hook { iteration: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed data: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
