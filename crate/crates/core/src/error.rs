use std::path::PathBuf;

use crate::geometry::GeometryError;

/// Crate-level error. Geometry failures are wrapped as-is; file and format
/// failures carry the offending path.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("object does not fit the output canvas at the minimum fill fraction")]
    ObjectTooLarge,

    #[error("cell ({row}, {col}) outside a {rows}x{cols} grid")]
    InvalidCell {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("item `{id}` references a missing file {}", path.display())]
    DanglingPath { id: String, path: PathBuf },

    #[error("unsupported manifest schema version {0}")]
    UnsupportedSchema(u64),

    #[error("need at least {k} items to build {k} folds, got {n}")]
    TooFewItems { n: usize, k: usize },

    #[error("item `{0}` has no prediction for the selected source")]
    MissingPrediction(String),

    #[error("item `{0}` is not assigned to any fold")]
    UnknownItem(String),

    #[error("unknown benchmark operation `{0}`")]
    UnknownOp(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: malformed JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem itself (missing/unreadable/unwritable
    /// files), as opposed to bad contents.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Image { source, .. } => matches!(source, image::ImageError::IoError(_)),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
