use std::path::PathBuf;

use echoloop::ErrorKind;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] echoloop::Error),

    #[error("artifact directory {} is locked by another run; remove {} if it is stale", .0.display(), .1.display())]
    Locked(PathBuf, PathBuf),
}

impl CliError {
    /// 0 success, 2 validation, 3 missing artifact, 4 numerical failure,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::MissingArtifact => 3,
                ErrorKind::Numerical => 4,
                ErrorKind::Io => 1,
            },
            CliError::Locked(..) => 1,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Locked(..) => "Locked",
        }
    }

    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Core(echoloop::Error::StateSpaceOverflow { .. }) => Some("rerun `echoloop markov` with --simulate"),
            _ => None,
        }
    }
}
