use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed WAV header in {path}: {reason}")]
    MalformedWav { path: String, reason: String },

    #[error("unsupported audio encoding in {path}: {reason}")]
    UnsupportedEncoding { path: String, reason: String },

    #[error("invalid audio record: {0}")]
    InvalidRecord(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("duplicate manifest path: {0}")]
    DuplicatePath(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },

    #[error("frame length mismatch: expected {expected}, got {actual}")]
    FrameLength { expected: usize, actual: usize },

    #[error("spectrum length mismatch: {0} vs {1} bins")]
    BinMismatch(usize, usize),

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("missing features: {}", .0.join(", "))]
    MissingFeatures(Vec<String>),

    #[error("training fold {fold} has no instances of class '{class}'")]
    FoldMissingClass { fold: usize, class: String },

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("model file is truncated")]
    Truncated,

    #[error("model file checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("not a model file")]
    BadMagic,

    #[error("corrupt model payload: {0}")]
    CorruptModel(String),

    #[error("event store error: {0}")]
    Store(String),

    #[error("sample source underrun: no data for {0:?}")]
    Underrun(std::time::Duration),

    #[error("sample queue overrun: consumer fell behind (capacity {0} chunks)")]
    Overrun(usize),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures of the underlying filesystem or stream rather than the data itself.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) | Error::MissingFile(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
