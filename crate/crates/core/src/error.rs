use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate line fit: need at least two points with distinct x")]
    DegenerateFit,
    #[error("polyline must contain at least one column")]
    EmptyPolyline,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("column {0} lies outside the polyline extent")]
    OutOfExtent(usize),
    #[error("calibration must be finite and strictly positive, got {0}")]
    InvalidCalibration(f64),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: no raster frames found")]
    EmptySequence { path: PathBuf },
    #[error("frame {index} is {found:?} but the sequence is {expected:?} (width, height)")]
    InconsistentDimensions {
        index: usize,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("image is {width}x{height}; frames must be at least {min}x{min}")]
    TooSmall { width: u32, height: u32, min: u32 },
    #[error("frame decoder failed: {0}")]
    Decoder(String),
}

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("cannot load model {path}: {message}")]
    ModelLoad { path: PathBuf, message: String },
    #[error("inference failed: {0}")]
    Inference(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode mask: {message}")]
    Format { path: PathBuf, message: String },
    #[error("binarization threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f32),
    #[error("probability map must be {expected}x{expected}, got {width}x{height}")]
    MapShape {
        expected: u32,
        width: u32,
        height: u32,
    },
    #[error("probability values must lie in [0, 1]")]
    MapRange,
    #[error("mask is {found:?} but frame is {expected:?} (width, height)")]
    MaskDimensions {
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("this build has no ONNX runtime; rebuild with the `onnx` feature")]
    OnnxUnavailable,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArchitectureError {
    #[error("found {found} aponeurosis candidate(s); need a superficial and a deep aponeurosis")]
    InsufficientAponeuroses { found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("masks differ in size: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("row {row} has {found} columns, expected {expected}")]
    RaggedMatrix {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("ANOVA denominator is zero (no variance in the data)")]
    DegenerateAnova,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: cannot write image: {message}")]
    Image { path: PathBuf, message: String },
    #[error("series lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Errors surfaced while processing a single frame end to end.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}
