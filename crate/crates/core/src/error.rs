use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown channel(s): {}", .0.join(", "))]
    UnknownChannel(Vec<String>),

    #[error("tensor format error in field `{field}`: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Training(_))
    }
}
