use thiserror::Error;

/// Command failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent configuration or input data.
    #[error("config error: {0}")]
    Config(String),

    /// A policy or dataset failed a precondition and was refused before
    /// estimation.
    #[error("refused: {0}")]
    Refused(String),

    #[error("numerical failure: {0}")]
    Numerical(lmtp::Error),

    #[error("cannot write report: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Refused(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<lmtp::Error> for CliError {
    fn from(e: lmtp::Error) -> Self {
        use lmtp::Error as E;
        if e.is_numerical() {
            return CliError::Numerical(e);
        }
        match e {
            E::PolicyRequirement(_) | E::ExposureDomain(_) | E::Validation { .. } | E::BootstrapRefused(_) => {
                CliError::Refused(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
