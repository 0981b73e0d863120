use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed raster: {0}")]
    Format(String),

    #[error("malformed json document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("pixel id {id} at (row {row}, col {col}) has no entry in the segment table")]
    UnknownPixelId { id: u32, row: usize, col: usize },

    #[error("unknown segment id {0}")]
    UnknownSegment(u32),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("no jointly valid pixels")]
    EmptyEvaluation,

    #[error("validation error: {0}")]
    Validation(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("oracle failure: {0}")]
    Oracle(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by reading or parsing input files, as opposed
    /// to inputs that parse but violate a contract.
    pub fn is_io_or_format(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format(_) | Error::Json(_))
    }
}

pub(crate) fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            left_w: a.0,
            left_h: a.1,
            right_w: b.0,
            right_h: b.1,
        });
    }
    Ok(())
}
