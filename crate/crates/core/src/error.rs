use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value is outside its allowed domain.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Shapes or lengths of the inputs do not agree.
    #[error("structural mismatch: {0}")]
    Structural(String),
    /// A configuration document is inconsistent or names something unknown.
    #[error("config error: {0}")]
    Config(String),
    /// An on-disk file does not follow its format.
    #[error("format error in `{field}`: {message}")]
    Format { field: String, message: String },
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Optimizer or run state does not allow the requested transition.
    #[error("state error: {0}")]
    State(String),
    /// Training produced a NaN or infinite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}
