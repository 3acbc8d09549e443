use thiserror::Error;

/// Errors produced by the stencil engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A pipeline made no progress within the watchdog budget.
    #[error("pipeline stalled for {stalled_ms} ms; counters = {counters:?}")]
    Deadlock {
        stalled_ms: u128,
        counters: Vec<i64>,
    },

    /// Another worker aborted the run.
    #[error("pipeline aborted")]
    Aborted,

    #[error("failed to spawn worker thread: {0}")]
    Spawn(std::io::Error),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
