use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] tbloc::Error),
    /// One or more checked invariants failed; the report has been written.
    #[error("{0}")]
    Invariant(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 invariant failure, 2 bad input, 3 numerical or i/o failure.
    pub fn exit_code(&self) -> ExitCode {
        use tbloc::Error as E;
        ExitCode::from(match self {
            CliError::Invariant(_) => 1,
            CliError::Config(_) => 2,
            CliError::Core(
                E::Params { .. }
                | E::UnknownSpecies(_)
                | E::Geometry(_)
                | E::NonDegeneracy { .. }
                | E::CutoffTooLarge { .. }
                | E::Model(_)
                | E::Invalid(_)
                | E::Unsupported(_)
                | E::Defect(_),
            ) => 2,
            CliError::Core(_) | CliError::Io(_) => 3,
        })
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
