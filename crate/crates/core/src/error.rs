use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("range exceeded: {what} needs {requested}, sieve limit is {limit}")]
    RangeExceeded {
        what: String,
        requested: u64,
        limit: u64,
    },
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("cache file {path}: {reason}")]
    Cache { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn range(what: impl Into<String>, requested: u64, limit: u64) -> Self {
        Error::RangeExceeded {
            what: what.into(),
            requested,
            limit,
        }
    }
}
