use nap_core::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Incompatible(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_INCOMPATIBLE: i32 = 5;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Incompatible(_) => EXIT_INCOMPATIBLE,
            CliError::Core(e) => match e {
                Error::Config(_) => EXIT_CONFIG,
                Error::Parse { .. } | Error::Io { .. } | Error::Data(_) | Error::Split(_) => EXIT_DATA,
                Error::NonFinite(_) | Error::MissingGradient(_) => EXIT_NUMERIC,
                Error::Checkpoint(_) | Error::Shape { .. } => EXIT_INCOMPATIBLE,
            },
        }
    }
}
