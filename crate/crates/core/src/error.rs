use std::path::PathBuf;

use crate::corpus::ExpressionLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dense correspondence broken: {path} has {found} vertices, corpus has {expected}")]
    CorrespondenceMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("invalid face: {0}")]
    InvalidFace(String),

    #[error("duplicate corpus entry for identity {identity} in category {category}")]
    DuplicateEntry {
        identity: u64,
        category: ExpressionLabel,
    },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("negative bending energy {value:e} exceeds round-off tolerance {tolerance:e}")]
    NegativeEnergy { value: f64, tolerance: f64 },

    #[error("degenerate neighbourhood at vertex {vertex}: neighbours are collinear")]
    DegenerateNeighborhood { vertex: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("face {identity} in {category}: {source}")]
    Face {
        identity: u64,
        category: ExpressionLabel,
        #[source]
        source: Box<Error>,
    },

    #[error("trio {category} {ids:?}: {source}")]
    Trio {
        category: ExpressionLabel,
        ids: [u64; 3],
        #[source]
        source: Box<Error>,
    },

    #[error("checksum mismatch for {} image(s): {}", .0.len(), .0.join(", "))]
    ChecksumMismatch(Vec<String>),

    #[error("generation interrupted after {written} new image(s)")]
    Interrupted { written: usize },

    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
