use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("no significant correlation peak: max {max:.1} below threshold {threshold:.1} (mean {mean:.2}, std {std:.2})")]
    NoPeak {
        max: f64,
        threshold: f64,
        mean: f64,
        std: f64,
    },

    #[error("gaussian fit failed: {0}")]
    FitFailed(String),

    #[error("tag file format: {0}")]
    Format(#[from] FormatError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("transport: {0}")]
    Transport(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps `self` with the name of the pipeline stage that failed.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error beneath any stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

/// Rejections produced while decoding a tag file or a wire stream.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected \"NDCTAG01\"")]
    BadMagic { found: [u8; 8] },

    #[error("unsupported version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("truncated: expected {expected} tags, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("truncated header: {actual} of {expected} bytes")]
    TruncatedHeader { expected: usize, actual: usize },

    #[error("{extra} trailing bytes after {count} tags")]
    TrailingBytes { count: u64, extra: u64 },

    #[error("tags not sorted at index {index}: {previous} > {current}")]
    Unsorted {
        index: u64,
        previous: i64,
        current: i64,
    },

    #[error("tags span {span} fs exceeds acquisition span {acquisition_span} fs")]
    SpanExceeded { span: u128, acquisition_span: u64 },

    #[error("resolution must be positive")]
    ZeroResolution,

    #[error("frame length {0} is not a multiple of 8")]
    FrameLength(u32),

    #[error("frame longer than {max} bytes: {found}")]
    FrameTooLong { found: u32, max: u32 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },

    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },

    #[error("line {line}: duplicate key `{key}` in [{section}]")]
    DuplicateKey {
        line: usize,
        section: String,
        key: String,
    },

    #[error("line {line}: invalid value for `{key}`: {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },

    #[error("missing required key `{key}` in [{section}]")]
    MissingKey { section: String, key: String },

    #[error("missing section [{0}]")]
    MissingSection(String),

    #[error("[{section}]: {message}")]
    Invalid { section: String, message: String },
}
