use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("tensor shape {shape:?} does not match data length {len}")]
    TensorLength { shape: Vec<usize>, len: usize },

    #[error("shape mismatch at layer {layer} ({kind}): expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        layer: usize,
        kind: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("invalid layer {layer} ({kind}): {reason}")]
    InvalidLayer {
        layer: usize,
        kind: &'static str,
        reason: &'static str,
    },

    #[error("input contains non-finite values")]
    NonFiniteInput,

    #[error("activation cache does not belong to this network state")]
    StaleCache,

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("glyph must be 56x56, got {width}x{height}")]
    GlyphSize { width: usize, height: usize },

    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated data: {0}")]
    Truncated(&'static str),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("model config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("malformed metadata: {0}")]
    Metadata(String),

    #[error("component is empty")]
    EmptyComponent,

    #[error("timestamp {current} ms does not follow {previous} ms")]
    NonMonotonicTimestamp { previous: u64, current: u64 },

    #[error("trajectory points can only be appended while the pen is down")]
    PenIsUp,

    #[error("degenerate trajectory: all points coincide")]
    DegenerateGlyph,

    #[error("missing dataset split {0}")]
    MissingSplit(String),

    #[error("calibration stream too short: {seconds:.2} s (need at least 3 s)")]
    StreamTooShort { seconds: f64 },

    #[error("no motion detected in calibration stream")]
    NoMotion,

    #[error("gave up generating a valid glyph for item {item} after {attempts} attempts")]
    GenerationFailed { item: usize, attempts: usize },
}
