use std::io;
use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("CoNLL-U parse error at line {line}: {message}")]
    Conllu { line: usize, message: String },

    #[error("malformed tree in sentence {sentence}: {message}")]
    Structure { sentence: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("format error at line {line}: {message}")]
    FormatAt { line: usize, message: String },

    #[error("truncated payload: header declares {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("alignment error at sentence {sentence}: {message}")]
    Alignment { sentence: usize, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient at epoch {epoch}, batch {batch}")]
    NonFiniteGradient { epoch: usize, batch: usize },

    #[error("dev metric is NaN at epoch {epoch}")]
    NanMetric { epoch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown paradigm UID {uid:?}; known UIDs: {known}")]
    UnknownParadigm { uid: String, known: String },

    #[error("pair {uid}#{index} has no model scores")]
    Unscored { uid: String, index: usize },

    #[error("unsupported paradigm for critical-edge analysis: {0}")]
    UnsupportedParadigm(String),

    #[error("singular design matrix")]
    SingularDesign,

    #[error("insufficient data: {n} observations for {params} parameters")]
    InsufficientData { n: usize, params: usize },

    #[error("p-value {0} outside [0, 1]")]
    InvalidPValue(f64),

    #[error("models are not nested: {0}")]
    NotNested(String),

    #[error("checksum mismatch for {path}")]
    Checksum { path: PathBuf },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
