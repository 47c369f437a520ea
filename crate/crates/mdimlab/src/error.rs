use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("block {block} is not full-branch: {reason}")]
    Structure { block: usize, reason: String },
    #[error("insufficient depth: need {needed} symbols, have {available}")]
    Depth { needed: usize, available: usize },
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Resource(_) => 3,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Precondition(_) => "precondition",
            Error::Resource(_) => "resource",
            Error::Input(_) => "input",
            Error::Structure { .. } => "structure",
            Error::Depth { .. } => "depth",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
