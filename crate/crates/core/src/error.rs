use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("degenerate signal: positional extent {extent:e} is below {threshold:e}")]
    DegenerateSignal { extent: f64, threshold: f64 },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("could not place template {id} at the required separation after {attempts} attempts")]
    SeparationUnreachable { id: u64, attempts: usize },

    #[error("need at least {min} signals, got {got}")]
    TooFewSignals { got: usize, min: usize },

    #[error("non-finite activation in layer `{layer}`")]
    NonFiniteActivation { layer: String },

    #[error("forward cache does not match this backward call: {0}")]
    CacheMismatch(String),

    #[error("account {0} is already enrolled")]
    DuplicateId(u64),

    #[error("account {0} is not enrolled")]
    UnknownId(u64),

    #[error("the account database is empty")]
    EmptyDatabase,

    #[error("the test set is empty")]
    EmptyTestSet,

    #[error("hash size mismatch: model has {model} bits, database has {database} bits")]
    HashSizeMismatch { model: usize, database: usize },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line front end: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteActivation { .. } => 4,
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
