use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MosaicError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MosaicError {
    #[error("no decodable images in {0}")]
    EmptyTileDirectory(PathBuf),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("corrupt tile cache: {0}")]
    CorruptCache(String),

    #[error("tile cache version {found} is not supported (expected {expected})")]
    CacheVersion { found: u32, expected: u32 },

    #[error("tile size mismatch: cache holds {found:?}, requested {requested:?}")]
    TileSizeMismatch {
        found: (usize, usize),
        requested: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible problem: {tiles} tiles x {n_redu} uses < {blocks} blocks")]
    Infeasible {
        tiles: usize,
        n_redu: usize,
        blocks: usize,
    },

    #[error("index {index} out of range 0..{len}")]
    OutOfRange { index: usize, len: usize },

    #[error("malformed {what}: {message}")]
    Parse { what: &'static str, message: String },
}

impl MosaicError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MosaicError::Io {
            path: path.into(),
            source,
        }
    }
}
