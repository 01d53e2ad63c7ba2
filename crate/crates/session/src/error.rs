use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Core(#[from] psibayes_core::Error),
    #[error("a stimulus is already awaiting a response")]
    AlreadyPending,
    #[error("no stimulus is awaiting a response")]
    NoPendingStimulus,
    #[error("session has stopped")]
    SessionStopped,
    #[error("session file has schema version {found}, this build reads version {expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt session file: {0}")]
    CorruptFile(String),
    #[error("replay diverged: {0}")]
    ReplayMismatch(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("session {0} not found")]
    NotFound(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type SessionResult<T> = std::result::Result<T, SessionError>;
