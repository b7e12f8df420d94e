use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration. `path` names the offending key.
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// Messages that cannot be compared, e.g. sketches built with different
    /// hash families.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("numerical divergence on client {client}: {message}")]
    Divergence { client: usize, message: String },

    #[error("generation error: {0}")]
    Generation(String),

    /// An internal invariant or a checked property did not hold.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fixture format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Domain(_) => 2,
            Error::Divergence { .. } => 4,
            Error::Protocol(_)
            | Error::Generation(_)
            | Error::Invariant(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
        }
    }
}
