use stencilpipe_bench::BenchError;
use stencilpipe_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Bench(#[from] BenchError),

    #[error("config error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verify(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    /// 1 for verification and runtime failures, 2 for bad configuration,
    /// 3 for transport failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Core(e) => match e {
                CoreError::Config(_)
                | CoreError::InvalidArgument(_)
                | CoreError::DimensionMismatch(_) => 2,
                CoreError::Transport(_) | CoreError::Protocol(_) => 3,
                _ => 1,
            },
            CliError::Bench(BenchError::InvalidArgument(_)) => 2,
            _ => 1,
        }
    }
}
