use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated frame {index}: expected {expected} bytes, got {got}")]
    TruncatedFrame {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("sample value {value} in frame {index} exceeds {bit_depth}-bit range")]
    InvalidSample {
        index: usize,
        value: u16,
        bit_depth: u8,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("frame too small: {0}")]
    FrameTooSmall(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("noise variance must be positive, got {0}")]
    InvalidNoiseVariance(f64),
    #[error("video has no frames")]
    EmptyVideo,
    #[error("approach {0} needs frame-difference features but the video has a single frame")]
    MissingDiffFeatures(u8),
    #[error("unknown approach {0}, expected 1..=9")]
    UnknownApproach(u8),
    #[error("bitrate must be positive, got {0}")]
    NonpositiveBitrate(f64),
    #[error("invalid encode metadata: {0}")]
    InvalidMeta(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("duplicate key {0}")]
    DuplicateKey(String),
    #[error("need at least 3 videos to split, got {0}")]
    TooFewVideos(usize),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("no feature tensor for video {0:?}")]
    MissingTensor(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("inconsistent feature layout: {0}")]
    InconsistentLayout(String),
    #[error("feature layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("model format version {found} not supported (expected {expected}); retrain or convert the model")]
    VersionMismatch { found: String, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("no encodes at {width}x{height} for rung {rung_bps} bps")]
    NoPointsForResolution {
        rung_bps: f64,
        width: u32,
        height: u32,
    },
    #[error("missing configuration: {0}")]
    ConfigMissing(String),
    #[error("query {0} outside interpolation range")]
    OutOfRange(f64),
    #[error("abscissae must be strictly increasing")]
    NonMonotonicAbscissa,
    #[error("curves do not overlap: {0}")]
    NoOverlap(String),
    #[error("degenerate rate-quality curve: {0}")]
    DegenerateCurve(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
