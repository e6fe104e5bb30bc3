use thiserror::Error;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or invalid configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Missing or unreadable input files, bad arguments.
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<kbrn::Error> for CliError {
    fn from(e: kbrn::Error) -> Self {
        match e {
            kbrn::Error::NonFiniteGradient { .. }
            | kbrn::Error::Diverged { .. }
            | kbrn::Error::SingularSystem { .. }
            | kbrn::Error::Invariant(_) => CliError::Numerical(e.to_string()),
            kbrn::Error::Shape { .. } | kbrn::Error::Argument(_) => CliError::Input(e.to_string()),
        }
    }
}
