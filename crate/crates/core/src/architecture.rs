//! Turning aponeurosis and fascicle masks into muscle architecture
//! measurements: fascicle length, pennation angle and muscle thickness.
//!
//! The steps per frame are:
//!
//! 1. split each mask into 8-connected components;
//! 2. drop aponeurosis components shorter than a length threshold, reduce the
//!    survivors to per-column centrelines, classify the topmost as superficial
//!    and the bottommost overlapping one as deep, and extend both laterally to
//!    the full image width;
//! 3. drop fascicle components shorter than a threshold and fit a straight
//!    line to each remaining fragment;
//! 4. intersect every fragment line with both aponeuroses, measuring length
//!    between the intersections and pennation against the local slope of the
//!    deep aponeurosis;
//! 5. measure thickness in a central band of columns.

use image::GrayImage;
use imageproc::region_labelling::{connected_components, Connectivity};
use rayon::prelude::*;

use crate::error::{ArchitectureError, PipelineError};
use crate::geometry::{
    angle_between, calibrated_distance, fit_line_least_squares, line_polyline_intersection, local_slope,
    point_to_polyline_distance, Calibration, ColumnPolyline, FittedLine, Point2,
};
use crate::ingest::{Frame, FrameSequence};
use crate::segmentation::{BinaryMask, FrameMasks, SegmentationBackend};

/// Tunable thresholds of the post-processing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PostProcessConfig {
    /// Aponeurosis components narrower than this (in columns) are discarded.
    pub apo_min_length_px: usize,
    /// Fascicle components narrower than this (in columns) are discarded.
    pub fascicle_min_length_px: usize,
    /// Fragments whose fitted `|dy/dx|` exceeds this are discarded.
    pub slope_bound: f64,
    /// Width of the central thickness band as a fraction of image width.
    pub thickness_band_fraction: f64,
    /// Columns used for the deep aponeurosis slope at a fascicle insertion.
    pub local_slope_window_px: usize,
    /// Outer columns used to extrapolate an aponeurosis flank.
    pub flank_window_px: usize,
    /// Fragments spanning fewer columns than this are treated as vertical.
    pub min_fit_x_spread_px: f64,
    /// Minimum horizontal overlap (relative to the shorter path) between the
    /// superficial and deep aponeurosis candidates.
    pub deep_overlap_fraction: f64,
}

impl Default for PostProcessConfig {
    fn default() -> Self {
        Self {
            apo_min_length_px: 200,
            fascicle_min_length_px: 40,
            slope_bound: 3.5,
            thickness_band_fraction: 0.10,
            local_slope_window_px: 50,
            flank_window_px: 50,
            min_fit_x_spread_px: 5.0,
            deep_overlap_fraction: 0.5,
        }
    }
}

/// How per-fascicle values collapse into one per-frame value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Median,
    Mean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Median => "median",
            Aggregation::Mean => "mean",
        }
    }

    /// `None` for an empty slice.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        match self {
            Aggregation::Mean => Some(values.iter().sum::<f64>() / values.len() as f64),
            Aggregation::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let mid = v.len() / 2;
                Some(if v.len() % 2 == 1 {
                    v[mid]
                } else {
                    0.5 * (v[mid - 1] + v[mid])
                })
            }
        }
    }
}

/// Everything needed to process frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub calibration: Calibration,
    pub post: PostProcessConfig,
    pub binarize_threshold: f32,
    pub aggregation: Aggregation,
    /// Interpolate aggregates across runs of at most this many empty frames.
    pub gap_fill: Option<usize>,
}

impl PipelineConfig {
    pub fn new(calibration: Calibration, aggregation: Aggregation) -> Self {
        Self {
            calibration,
            post: PostProcessConfig::default(),
            binarize_threshold: 0.5,
            aggregation,
            gap_fill: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

/// A maximal 8-connected set of mask pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentBlob {
    /// `(x, y)` in row-major scan order.
    pub pixels: Vec<(u32, u32)>,
    pub bbox: BoundingBox,
}

impl ComponentBlob {
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    /// Number of columns spanned.
    pub fn x_extent(&self) -> usize {
        (self.bbox.x_max - self.bbox.x_min + 1) as usize
    }

    /// Mean row of the blob's pixels in each column it spans.
    ///
    /// An 8-connected set always covers a contiguous run of columns.
    pub fn column_centreline(&self) -> ColumnPolyline {
        let n = self.x_extent();
        let mut sums = vec![0.0f64; n];
        let mut counts = vec![0u32; n];
        for &(x, y) in &self.pixels {
            let i = (x - self.bbox.x_min) as usize;
            sums[i] += y as f64;
            counts[i] += 1;
        }
        let ys = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c.max(1) as f64)
            .collect();
        ColumnPolyline::new(self.bbox.x_min as usize, ys).expect("blob spans at least one column")
    }

    pub fn points(&self) -> Vec<Point2> {
        self.pixels
            .iter()
            .map(|&(x, y)| Point2::new(x as f64, y as f64))
            .collect()
    }
}

/// All 8-connected components, largest first (ties broken by scan order).
pub fn extract_components(mask: &BinaryMask) -> Vec<ComponentBlob> {
    let (w, h) = mask.dimensions();
    if mask.count_ones() == 0 {
        return Vec::new();
    }
    let img = GrayImage::from_raw(w, h, mask.bits().iter().map(|&b| b as u8).collect())
        .expect("mask buffer matches its dimensions");
    let labels = connected_components(&img, Connectivity::Eight, image::Luma([0u8]));

    let mut blobs: Vec<Option<ComponentBlob>> = Vec::new();
    for (x, y, label) in labels.enumerate_pixels() {
        let label = label.0[0] as usize;
        if label == 0 {
            continue;
        }
        if blobs.len() < label {
            blobs.resize(label, None);
        }
        let blob = blobs[label - 1].get_or_insert_with(|| ComponentBlob {
            pixels: Vec::new(),
            bbox: BoundingBox {
                x_min: x,
                y_min: y,
                x_max: x,
                y_max: y,
            },
        });
        blob.pixels.push((x, y));
        let b = &mut blob.bbox;
        b.x_min = b.x_min.min(x);
        b.x_max = b.x_max.max(x);
        b.y_max = y;
    }
    let mut blobs: Vec<ComponentBlob> = blobs.into_iter().flatten().collect();
    blobs.sort_by(|a, b| {
        b.pixel_count()
            .cmp(&a.pixel_count())
            .then_with(|| (a.pixels[0].1, a.pixels[0].0).cmp(&(b.pixels[0].1, b.pixels[0].0)))
    });
    blobs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AponeurosisRole {
    Superficial,
    Deep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aponeurosis {
    pub role: AponeurosisRole,
    /// Centreline extended over the full image width.
    pub path: ColumnPolyline,
    pub extrapolated_left: usize,
    pub extrapolated_right: usize,
    /// Columns covered by the detected component, inclusive.
    pub source_extent: (usize, usize),
}

impl Aponeurosis {
    fn from_centreline(role: AponeurosisRole, centreline: &ColumnPolyline, width: usize, flank_window: usize) -> Self {
        let (path, left, right) = centreline.extrapolated(width, flank_window);
        Self {
            role,
            path,
            extrapolated_left: left,
            extrapolated_right: right,
            source_extent: (centreline.x_start(), centreline.x_end()),
        }
    }
}

fn overlap_fraction(a: &ColumnPolyline, b: &ColumnPolyline) -> f64 {
    let lo = a.x_start().max(b.x_start());
    let hi = a.x_end().min(b.x_end());
    if hi < lo {
        return 0.0;
    }
    (hi - lo + 1) as f64 / a.len().min(b.len()) as f64
}

/// Find the superficial and deep aponeuroses in an aponeurosis mask.
pub fn detect_aponeuroses(
    mask: &BinaryMask,
    min_length_px: usize,
    image_width: usize,
    post: &PostProcessConfig,
) -> Result<(Aponeurosis, Aponeurosis), ArchitectureError> {
    let mut candidates: Vec<(ColumnPolyline, f64)> = extract_components(mask)
        .into_iter()
        .filter(|b| b.x_extent() >= min_length_px)
        .map(|b| {
            let line = b.column_centreline();
            let mean = line.mean_y();
            (line, mean)
        })
        .collect();
    let found = candidates.len();
    if found < 2 {
        return Err(ArchitectureError::InsufficientAponeuroses { found });
    }
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.x_start().cmp(&b.0.x_start())));

    let (superficial, sup_mean) = &candidates[0];
    let deep = candidates[1..]
        .iter()
        .rev()
        .find(|(line, mean)| mean > sup_mean && overlap_fraction(superficial, line) >= post.deep_overlap_fraction)
        .map(|(line, _)| line)
        .ok_or(ArchitectureError::InsufficientAponeuroses { found })?;

    Ok((
        Aponeurosis::from_centreline(AponeurosisRole::Superficial, superficial, image_width, post.flank_window_px),
        Aponeurosis::from_centreline(AponeurosisRole::Deep, deep, image_width, post.flank_window_px),
    ))
}

/// A visible piece of a fascicle with its straight-line fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FascicleFragment {
    pub blob: ComponentBlob,
    pub line: FittedLine,
}

/// Fit lines to all sufficiently long fascicle components, ordered left to
/// right.
pub fn detect_fascicle_fragments(
    mask: &BinaryMask,
    min_length_px: usize,
    post: &PostProcessConfig,
) -> Vec<FascicleFragment> {
    let mut fragments: Vec<FascicleFragment> = extract_components(mask)
        .into_iter()
        .filter(|b| b.x_extent() >= min_length_px)
        .filter(|b| (b.bbox.x_max - b.bbox.x_min) as f64 >= post.min_fit_x_spread_px)
        .filter_map(|blob| {
            let line = fit_line_least_squares(&blob.points()).ok()?;
            (line.slope.abs() <= post.slope_bound).then_some(FascicleFragment { blob, line })
        })
        .collect();
    fragments.sort_by(|a, b| {
        a.line
            .x_min
            .total_cmp(&b.line.x_min)
            .then_with(|| a.blob.bbox.y_min.cmp(&b.blob.bbox.y_min))
    });
    fragments
}

#[derive(Debug, Clone, PartialEq)]
pub struct FascicleMeasurement {
    /// Index of the fragment within the frame's fragment list.
    pub fragment_id: usize,
    pub length_mm: f64,
    pub pennation_deg: f64,
    /// Intersection with the deep aponeurosis.
    pub deep_point: Point2,
    /// Intersection with the superficial aponeurosis.
    pub superficial_point: Point2,
}

impl FascicleMeasurement {
    pub fn x_start(&self) -> f64 {
        self.deep_point.x
    }

    pub fn x_end(&self) -> f64 {
        self.superficial_point.x
    }
}

/// Measure one fragment, or `None` when its line misses either aponeurosis.
pub fn measure_fascicle(
    fragment_id: usize,
    frag: &FascicleFragment,
    superficial: &Aponeurosis,
    deep: &Aponeurosis,
    cal: &Calibration,
    local_window_px: usize,
) -> Option<FascicleMeasurement> {
    let deep_point = line_polyline_intersection(&frag.line, &deep.path)?;
    let superficial_point = line_polyline_intersection(&frag.line, &superficial.path)?;
    let length_mm = calibrated_distance(deep_point, superficial_point, cal);
    if length_mm <= 0.0 {
        return None;
    }
    let x0 = (deep_point.x.round().max(0.0) as usize).clamp(deep.path.x_start(), deep.path.x_end());
    let apo_slope = local_slope(&deep.path, x0, local_window_px).ok()?;
    Some(FascicleMeasurement {
        fragment_id,
        length_mm,
        pennation_deg: angle_between(frag.line.slope, apo_slope),
        deep_point,
        superficial_point,
    })
}

/// Columns `[lo, hi]` of the central thickness band.
pub fn thickness_band(image_width: usize, band_fraction: f64) -> (usize, usize) {
    let w = image_width as f64;
    let half = 0.5 * band_fraction.clamp(0.0, 1.0);
    let last = image_width.saturating_sub(1);
    let lo = (((0.5 - half) * w).round() as usize).min(last);
    let hi = (((0.5 + half) * w).round() as usize).clamp(lo, last);
    (lo, hi)
}

/// Minimum over band columns of the distance from the superficial path to
/// the deep path, in millimetres.
pub fn measure_thickness(
    superficial: &Aponeurosis,
    deep: &Aponeurosis,
    cal: &Calibration,
    image_width: usize,
    band_fraction: f64,
) -> Option<f64> {
    let (lo, hi) = thickness_band(image_width, band_fraction);
    (lo..=hi)
        .filter_map(|c| superficial.path.y_at_column(c).map(|y| Point2::new(c as f64, y)))
        .map(|p| point_to_polyline_distance(p, &deep.path, cal))
        .min_by(f64::total_cmp)
}

/// How a frame's processing ended.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameStatus {
    Measured,
    /// Fewer than two usable aponeuroses; the frame carries no measurements.
    NoAponeuroses,
    /// Segmentation or loading failed for this frame.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub index: usize,
    pub timestamp_s: Option<f64>,
    pub thickness_mm: Option<f64>,
    pub fascicles: Vec<FascicleMeasurement>,
    pub aggregate_length_mm: Option<f64>,
    pub aggregate_pennation_deg: Option<f64>,
    pub aggregation: Aggregation,
    pub superficial: Option<Aponeurosis>,
    pub deep: Option<Aponeurosis>,
    pub status: FrameStatus,
    /// Aggregates were interpolated from neighbouring frames.
    pub gap_filled: bool,
}

impl FrameResult {
    pub fn empty(index: usize, timestamp_s: Option<f64>, aggregation: Aggregation, status: FrameStatus) -> Self {
        Self {
            index,
            timestamp_s,
            thickness_mm: None,
            fascicles: Vec::new(),
            aggregate_length_mm: None,
            aggregate_pennation_deg: None,
            aggregation,
            superficial: None,
            deep: None,
            status,
            gap_filled: false,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.status, FrameStatus::Failed(_))
    }
}

/// The mask-to-measurement stage for one frame.
pub fn measure_masks(
    masks: &FrameMasks,
    index: usize,
    timestamp_s: Option<f64>,
    config: &PipelineConfig,
) -> FrameResult {
    let post = &config.post;
    let width = masks.aponeurosis.width() as usize;
    let cal = &config.calibration;

    let (superficial, deep) = match detect_aponeuroses(&masks.aponeurosis, post.apo_min_length_px, width, post) {
        Ok(pair) => pair,
        Err(ArchitectureError::InsufficientAponeuroses { .. }) => {
            return FrameResult::empty(index, timestamp_s, config.aggregation, FrameStatus::NoAponeuroses)
        }
    };

    let thickness_mm = measure_thickness(&superficial, &deep, cal, width, post.thickness_band_fraction);
    let fascicles: Vec<FascicleMeasurement> =
        detect_fascicle_fragments(&masks.fascicle, post.fascicle_min_length_px, post)
            .iter()
            .enumerate()
            .filter_map(|(id, frag)| measure_fascicle(id, frag, &superficial, &deep, cal, post.local_slope_window_px))
            .collect();

    let lengths: Vec<f64> = fascicles.iter().map(|f| f.length_mm).collect();
    let angles: Vec<f64> = fascicles.iter().map(|f| f.pennation_deg).collect();
    FrameResult {
        index,
        timestamp_s,
        thickness_mm,
        aggregate_length_mm: config.aggregation.apply(&lengths),
        aggregate_pennation_deg: config.aggregation.apply(&angles),
        fascicles,
        aggregation: config.aggregation,
        superficial: Some(superficial),
        deep: Some(deep),
        status: FrameStatus::Measured,
        gap_filled: false,
    }
}

/// Segment and measure one frame.
pub fn process_frame(
    frame: &Frame,
    backend: &SegmentationBackend,
    config: &PipelineConfig,
) -> Result<FrameResult, PipelineError> {
    let masks = backend.masks_for(frame, config.binarize_threshold)?;
    Ok(measure_masks(&masks, frame.index, frame.timestamp_s, config))
}

/// Process every frame independently and return results in frame order.
///
/// `workers == 0` uses the global thread pool. Per-frame failures become
/// empty results with [`FrameStatus::Failed`].
pub fn process_sequence(
    seq: &FrameSequence,
    backend: &SegmentationBackend,
    config: &PipelineConfig,
    workers: usize,
) -> Vec<FrameResult> {
    let run = || -> Vec<FrameResult> {
        seq.frames
            .par_iter()
            .map(|frame| {
                process_frame(frame, backend, config).unwrap_or_else(|e| {
                    FrameResult::empty(
                        frame.index,
                        frame.timestamp_s,
                        config.aggregation,
                        FrameStatus::Failed(e.to_string()),
                    )
                })
            })
            .collect()
    };
    let mut results = if workers == 0 {
        run()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    };
    if let Some(max_gap) = config.gap_fill {
        fill_gaps(&mut results, max_gap);
    }
    results
}

/// Linearly interpolate aggregate length and pennation across interior runs
/// of at most `max_gap` frames without fascicles. Per-fascicle records are
/// never created.
pub fn fill_gaps(results: &mut [FrameResult], max_gap: usize) {
    let has_value = |r: &FrameResult| r.aggregate_length_mm.is_some() && r.aggregate_pennation_deg.is_some();
    let mut prev: Option<usize> = None;
    for i in 0..results.len() {
        if !has_value(&results[i]) {
            continue;
        }
        if let Some(p) = prev {
            let gap = i - p - 1;
            let fillable = (p + 1..i).all(|j| results[j].fascicles.is_empty());
            if gap > 0 && gap <= max_gap && fillable {
                let lerp = |a: f64, b: f64, j: usize| a + (b - a) * (j - p) as f64 / (i - p) as f64;
                let (la, pa) = (results[p].aggregate_length_mm.unwrap(), results[p].aggregate_pennation_deg.unwrap());
                let (lb, pb) = (results[i].aggregate_length_mm.unwrap(), results[i].aggregate_pennation_deg.unwrap());
                for (j, r) in results.iter_mut().enumerate().take(i).skip(p + 1) {
                    r.aggregate_length_mm = Some(lerp(la, lb, j));
                    r.aggregate_pennation_deg = Some(lerp(pa, pb, j));
                    r.gap_filled = true;
                }
            }
        }
        prev = Some(i);
    }
}
