use solist_core::Error as CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit code: 2 for rejected configuration, 3 for violated
    /// model invariants, 4 for i/o failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(CoreError::InvalidParameter(_) | CoreError::Capacity(_)) => 2,
            CliError::Core(CoreError::SolveFailed(_) | CoreError::Domination(_)) => 3,
            CliError::Io(_) | CliError::Csv(_) => 4,
        }
    }
}
