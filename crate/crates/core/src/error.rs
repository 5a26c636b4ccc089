use std::io;

/// Errors raised anywhere in the pipeline.
///
/// The variants double as the CLI exit-code classes: configuration and
/// specification problems are user input errors, data errors come from
/// malformed or inconsistent records, estimation errors come from the
/// numerical stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("specification error: {0}")]
    Specification(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("not identifiable: {0}")]
    Identifiability(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn spec(msg: impl Into<String>) -> Self {
        Error::Specification(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn estimation(msg: impl Into<String>) -> Self {
        Error::Estimation(msg.into())
    }

    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefix the message with the pipeline stage that raised it.
    pub fn in_stage(self, stage: &str) -> Self {
        let tag = |m: String| format!("[{stage}] {m}");
        match self {
            Error::Specification(m) => Error::Specification(tag(m)),
            Error::Configuration(m) => Error::Configuration(tag(m)),
            Error::Data(m) => Error::Data(tag(m)),
            Error::Estimation(m) => Error::Estimation(tag(m)),
            Error::Identifiability(m) => Error::Identifiability(tag(m)),
            Error::Io { path, source } => Error::Io {
                path: tag(path),
                source,
            },
        }
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Specification(_) | Error::Configuration(_) => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Estimation(_) | Error::Identifiability(_) => 4,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}
