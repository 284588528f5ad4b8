use std::path::PathBuf;

/// Errors surfaced by every fallible operation in the crate.
///
/// The variant is the machine-readable error class; the CLI prints it
/// verbatim as the first token of its one-line failure report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A persisted artifact (dataset, checkpoint, vocabulary) is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Training diverged or hit an unrecoverable numeric condition.
    #[error("training error: {0}")]
    Training(String),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The message without its class prefix.
    pub fn detail(&self) -> String {
        match self {
            Error::Input(m) | Error::Format(m) | Error::Training(m) => m.clone(),
            Error::Tensor(e) => e.to_string(),
            Error::Io { path, source } => format!("{}: {source}", path.display()),
            Error::Json(e) => e.to_string(),
            Error::Image(e) => e.to_string(),
        }
    }

    /// Short stable class name used in CLI error lines.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Format(_) => "format",
            Error::Training(_) => "training",
            Error::Tensor(_) => "tensor",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
