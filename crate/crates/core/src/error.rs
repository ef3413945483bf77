//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    Decode { path: PathBuf, detail: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid illuminant: {0}")]
    InvalidEstimate(String),

    #[error("illuminant component {value} is at or below the division tolerance {tolerance}")]
    IlluminantComponentTooSmall { value: f64, tolerance: f64 },

    #[error("downsample factor {factor} exceeds both image dimensions {width}x{height}")]
    DownsampleFactorTooLarge {
        factor: usize,
        width: usize,
        height: usize,
    },

    #[error("image {width}x{height} is smaller than the {support}x{support} kernel support")]
    ImageSmallerThanKernel {
        width: usize,
        height: usize,
        support: usize,
    },

    #[error("insufficient gray evidence: {valid} candidate pixels, {required} required")]
    InsufficientGrayEvidence { valid: usize, required: usize },

    #[error("image has no valid pixels")]
    NoValidPixels,

    #[error("log-chroma undefined for non-positive RGB ({0}, {1}, {2})")]
    NonPositiveChannel(f64, f64, f64),

    #[error("no pixels contribute to the histogram")]
    EmptyHistogram,

    #[error("map size mismatch: expected {expected}x{expected}, got {got}x{got}")]
    GridSizeMismatch { expected: usize, got: usize },

    #[error("zero total mass")]
    ZeroMass,

    #[error("degenerate posterior: circular first moment below threshold")]
    DegeneratePosterior,

    #[error("model has not been trained")]
    UntrainedModel,

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("empty error list")]
    EmptyErrorList,

    #[error("cannot split {len} samples into {k} folds")]
    BadFoldCount { k: usize, len: usize },

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("ground-truth table, line {line}: {detail}")]
    GroundTruth { line: usize, detail: String },

    #[error("config file, line {line}: {detail}")]
    ConfigFile { line: usize, detail: String },
}
