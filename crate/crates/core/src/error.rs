use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("region {x},{y} {w}x{h} out of bounds for {width}x{height} image")]
    RegionOutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },

    #[error("crop size {size} exceeds image dimensions {width}x{height}")]
    InvalidCropSize { size: u32, width: u32, height: u32 },

    #[error("invalid vignette parameters: {0}")]
    InvalidVignette(String),

    #[error("patch size must be at least 1")]
    InvalidPatchSize,

    #[error("patch size {patch_size} yields an empty grid for {width}x{height} image")]
    EmptyGrid {
        width: u32,
        height: u32,
        patch_size: u32,
    },

    #[error("fragment spec inconsistent with image: {0}")]
    InconsistentSpec(String),

    #[error("cannot aggregate an empty score list")]
    EmptyScores,

    #[error("control strategy takes exactly one score, got {got}")]
    ControlArity { got: usize },

    #[error("invalid patch score: {0}")]
    InvalidScore(String),

    #[error("image {width}x{height} too small, need at least 3x3")]
    ImageTooSmall { width: u32, height: u32 },

    #[error("calibration scale must be positive, got {0}")]
    InvalidCalibration(f64),

    #[error("model error: {0}")]
    Model(String),

    #[error("unmatched basenames between directories: {orphans:?}")]
    UnmatchedBasenames { orphans: Vec<String> },

    #[error("duplicate sample id {0}")]
    DuplicateSampleId(String),

    #[error("pair {pair_id} has {count} members, expected 2")]
    MalformedPair { pair_id: String, count: usize },

    #[error("split strategy not applicable: {0}")]
    StrategyInapplicable(String),

    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),

    #[error("holdout fraction must lie in (0,1), got {0}")]
    InvalidFraction(f64),

    #[error("invalid batch configuration: {0}")]
    InvalidBatchConfig(String),

    #[error("degenerate manifest: {0}")]
    DegenerateManifest(String),

    #[error("cannot evaluate metrics over zero samples")]
    EmptyEvaluation,

    #[error("labels and predictions differ in length: {labels} vs {predictions}")]
    LengthMismatch { labels: usize, predictions: usize },

    #[error("logit matrix is empty")]
    EmptyMatrix,

    #[error("logit matrix malformed: {0}")]
    MalformedMatrix(String),

    #[error("top_k {top_k} out of range for {classes} classes")]
    TopKOutOfRange { top_k: usize, classes: usize },

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("scorer failed: {0}")]
    Scorer(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    ImageCodec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}:{line}: {source}", path.display())]
    ManifestParse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
