use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { expected: u32, found: u32 },

    #[error("truncated file: needed {needed} bytes at byte offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("mesh is not watertight: {open_edges} edges are not shared by exactly two faces")]
    NotWatertight { open_edges: usize },

    #[error("missing mesh attribute: {0}")]
    MissingAttribute(&'static str),

    #[error("point lies behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("iso-value {iso} produces an empty surface")]
    EmptySurface { iso: f64 },

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

    pub(crate) fn parse_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    pub(crate) fn parse_byte(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("byte offset {offset}"),
            message: message.into(),
        }
    }
}
