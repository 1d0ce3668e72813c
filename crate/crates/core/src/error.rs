use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PgaError>;

#[derive(Debug, Error)]
pub enum PgaError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected \"PGAT\", found {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported version {0} (expected 1)")]
    UnsupportedVersion(u32),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    #[error("truncated header: {0}")]
    TruncatedHeader(&'static str),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("trailing bytes after payload: {0} extra")]
    TrailingBytes(usize),

    #[error("empty shape: tensors need at least one dimension")]
    EmptyShape,

    #[error("shape {0:?} is too large to address")]
    ShapeOverflow(Vec<u64>),

    #[error("shape {shape:?} implies {expected} values but {found} were given")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("expected dtype {expected}, found {found}")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid JSON in {context}: {message}")]
    Json { context: String, message: String },

    #[error("missing layer {0}")]
    MissingLayer(usize),

    #[error("layer {layer}: shape mismatch, expected {expected:?}, found {found:?}")]
    LayerShape {
        layer: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("row {row} has zero norm")]
    ZeroNormRow { row: usize },

    #[error("correlation undefined: {0} has zero rank variance")]
    UndefinedCorrelation(&'static str),

    #[error("null draw {draw} failed: {source}")]
    NullDrawFailed {
        draw: usize,
        #[source]
        source: Box<PgaError>,
    },

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<PgaError>,
    },

    #[error("{analysis}: {source}")]
    Analysis {
        analysis: &'static str,
        #[source]
        source: Box<PgaError>,
    },

    #[error("readout has no final LayerNorm parameters")]
    MissingLayerNorm,

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl PgaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PgaError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PgaError::InvalidArgument(msg.into())
    }

    pub(crate) fn at_layer(self, layer: usize) -> Self {
        PgaError::Layer {
            layer,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_analysis(self, analysis: &'static str) -> Self {
        PgaError::Analysis {
            analysis,
            source: Box::new(self),
        }
    }

    /// True when the root cause is a filesystem failure rather than bad input.
    pub fn is_io(&self) -> bool {
        match self {
            PgaError::Io { .. } => true,
            PgaError::NullDrawFailed { source, .. }
            | PgaError::Layer { source, .. }
            | PgaError::Analysis { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
