use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<dcrn::Error> for CliError {
    fn from(e: dcrn::Error) -> Self {
        use dcrn::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { .. } => CliError::Io(msg),
            E::Contract(_) | E::Parse { .. } | E::Manifest(_) | E::Shape { .. } => {
                CliError::Config(msg)
            }
            // Remaining failures are numerical breakdowns during training.
            _ => CliError::Divergence(msg),
        }
    }
}
