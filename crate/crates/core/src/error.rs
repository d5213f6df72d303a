use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} samples, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("raster dimensions must be at least 1, got {bands}x{height}x{width}")]
    ZeroDimension { bands: usize, height: usize, width: usize },

    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },

    #[error("band {band} out of range for raster with {bands} bands")]
    BandOutOfRange { band: usize, bands: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("too few samples: need at least {needed}, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },

    #[error("too few bands: need at least {needed}, got {actual}")]
    TooFewBands { needed: usize, actual: usize },

    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("dimensions {height}x{width} not divisible by ratio {ratio}")]
    NonDivisible { height: usize, width: usize, ratio: usize },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("degenerate window: zero denominator with epsilon = 0")]
    DegenerateWindow,

    #[error("all windows are degenerate")]
    AllWindowsDegenerate,

    #[error("all pixels are degenerate (zero spectral vectors)")]
    AllPixelsDegenerate,

    #[error("reference band {band} has zero mean")]
    ZeroMeanReferenceBand { band: usize },

    #[error("value {value} outside [0, 1] for {name}")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] io::Error),
}
