use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },

    #[error("header mismatch between {} and {}", first.display(), other.display())]
    HeaderMismatch { first: PathBuf, other: PathBuf },

    #[error("{}:{line}: expected {expected} cells, found {found}", path.display())]
    RowWidth {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("input is empty: {0}")]
    Empty(String),

    #[error("missing column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },

    #[error("feature `{feature}`: {message}")]
    BadFeature { feature: String, message: String },

    #[error("unseen category `{value}` in column `{column}` while encoding fitted rows")]
    UnseenCategory { column: String, value: String },

    #[error("split: {0}")]
    Split(String),

    #[error("shape error in {layer}: {message}")]
    Shape { layer: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: String,
        epoch: usize,
        batch: usize,
    },

    #[error("digest mismatch for {what}: expected {expected}, found {actual}")]
    Digest {
        what: String,
        expected: String,
        actual: String,
    },

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("truncated weight file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("all grid-search cells failed")]
    GridExhausted,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(layer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            message: message.into(),
        }
    }
}
