use thiserror::Error;

/// Coarse classification of an [`Error`], used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Format,
    Invariant,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parameter(_) => ErrorKind::Usage,
            Error::Format { .. } | Error::Json(_) | Error::Csv(_) => ErrorKind::Format,
            Error::Shape { .. }
            | Error::Invariant(_)
            | Error::Coverage(_)
            | Error::Evaluation(_) => ErrorKind::Invariant,
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::Io(_) => ErrorKind::Io,
            Error::Node { source, .. } => source.kind(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
