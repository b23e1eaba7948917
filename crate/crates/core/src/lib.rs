//! Batch measurement of muscle architecture from B-mode ultrasound frames.
//!
//! Frames are segmented into aponeurosis and fascicle masks (by ONNX models or
//! from precomputed mask files), and the masks are reduced to fascicle
//! lengths, pennation angles and muscle thickness per frame. The [`metrics`]
//! module provides the agreement statistics used to compare methods.

pub mod architecture;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod report;
pub mod segmentation;
pub mod synthetic;

pub use architecture::{
    process_frame, process_sequence, Aggregation, FascicleMeasurement, FrameResult, FrameStatus, PipelineConfig,
    PostProcessConfig,
};
pub use error::{ArchitectureError, GeometryError, IngestError, MetricsError, PipelineError, ReportError, SegmentationError};
pub use geometry::{Calibration, Point2};
pub use ingest::{Frame, FrameSequence, FrameSource};
pub use segmentation::{BinaryMask, ClassKind, MaskTemplate, SegmentationBackend};
