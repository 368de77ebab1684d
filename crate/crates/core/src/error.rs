use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state space of {states} states exceeds the exact-mode cap of {cap}; use Monte-Carlo simulation instead")]
    StateSpaceOverflow { states: String, cap: usize },

    #[error("degenerate distribution: all transition mass is zero for state {state}")]
    DegenerateDistribution { state: String },

    #[error("not an absorbing chain: {0}")]
    NotAbsorbingChain(String),

    #[error("singular matrix (estimated 1-norm condition number {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("unknown user id {0}")]
    UnknownUser(u32),

    #[error("unknown item id {0}")]
    UnknownItem(u32),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{malformed} of {total} lines malformed (allowed fraction {allowed})")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        allowed: f64,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    MissingArtifact,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_)
            | Error::StateSpaceOverflow { .. }
            | Error::UnknownUser(_)
            | Error::UnknownItem(_)
            | Error::EmptyInput(_)
            | Error::TooManyMalformed { .. }
            | Error::Json(_) => ErrorKind::Validation,
            Error::DegenerateDistribution { .. }
            | Error::NotAbsorbingChain(_)
            | Error::SingularMatrix { .. } => ErrorKind::Numerical,
            Error::MissingArtifact(_) => ErrorKind::MissingArtifact,
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => ErrorKind::MissingArtifact,
            Error::Io(_) => ErrorKind::Io,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::StateSpaceOverflow { .. } => "StateSpaceOverflow",
            Error::DegenerateDistribution { .. } => "DegenerateDistribution",
            Error::NotAbsorbingChain(_) => "NotAbsorbingChain",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::UnknownUser(_) => "UnknownUser",
            Error::UnknownItem(_) => "UnknownItem",
            Error::EmptyInput(_) => "EmptyInput",
            Error::TooManyMalformed { .. } => "TooManyMalformed",
            Error::MissingArtifact(_) => "MissingArtifact",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
