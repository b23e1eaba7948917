//! Pixelwise aponeurosis / fascicle masks, from ONNX models or mask files.

use std::fmt;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use crate::error::SegmentationError;
use crate::ingest::{self, Frame, MODEL_SIZE};

/// Which structure a map or mask labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassKind {
    Aponeurosis,
    Fascicle,
}

impl ClassKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassKind::Aponeurosis => "aponeurosis",
            ClassKind::Fascicle => "fascicle",
        }
    }
}

impl fmt::Display for ClassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-pixel class probabilities on the 512x512 model grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    values: Vec<f32>,
    kind: ClassKind,
}

impl ProbabilityMap {
    /// `values` in row-major order.
    pub fn new(values: Vec<f32>, width: u32, height: u32, kind: ClassKind) -> Result<Self, SegmentationError> {
        if width != MODEL_SIZE || height != MODEL_SIZE || values.len() != (width * height) as usize {
            return Err(SegmentationError::MapShape {
                expected: MODEL_SIZE,
                width,
                height,
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(SegmentationError::MapRange);
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn kind(&self) -> ClassKind {
        self.kind
    }
}

/// A two-valued label grid.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    kind: ClassKind,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("kind", &self.kind)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, kind: ClassKind) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
            kind,
        }
    }

    pub fn from_fn(width: u32, height: u32, kind: ClassKind, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
            kind,
        }
    }

    /// Any pixel brighter than 127 is set.
    pub fn from_gray(img: &GrayImage, kind: ClassKind) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            bits: img.pixels().map(|p| p.0[0] > 127).collect(),
            kind,
        }
    }

    /// 0 for background, 255 for the class.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([if self.get(x, y) { 255 } else { 0 }]))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn kind(&self) -> ClassKind {
        self.kind
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Shift contents by `(dx, dy)` pixels; pixels moved off the grid are
    /// dropped and vacated pixels are cleared.
    pub fn translated(&self, dx: i64, dy: i64) -> Self {
        let (w, h) = (self.width as i64, self.height as i64);
        Self::from_fn(self.width, self.height, self.kind, |x, y| {
            let (sx, sy) = (x as i64 - dx, y as i64 - dy);
            (0..w).contains(&sx) && (0..h).contains(&sy) && self.get(sx as u32, sy as u32)
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), SegmentationError> {
        self.to_gray().save(path).map_err(|e| SegmentationError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Set a bit wherever the probability strictly exceeds `threshold`.
pub fn binarize(map: &ProbabilityMap, threshold: f32) -> Result<BinaryMask, SegmentationError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SegmentationError::InvalidThreshold(threshold));
    }
    Ok(BinaryMask {
        width: MODEL_SIZE,
        height: MODEL_SIZE,
        bits: map.values.iter().map(|&p| p > threshold).collect(),
        kind: map.kind,
    })
}

/// Normalize a model-grid image to `pixel / 255` in row-major order.
pub fn normalize_input(grid: &GrayImage) -> Vec<f32> {
    grid.pixels().map(|p| p.0[0] as f32 / 255.0).collect()
}

/// Path template resolving a per-frame mask file.
///
/// Placeholders: `{class}` (`aponeurosis` / `fascicle`), `{stem}` (the frame's
/// source file stem), `{frame}` (frame index) and `{frame:N}` (index
/// zero-padded to N digits).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTemplate(String);

impl MaskTemplate {
    pub fn new(template: impl Into<String>) -> Self {
        Self(template.into())
    }

    /// Layout used when only a directory is given:
    /// `<dir>/masks_<class>/<stem>.png`.
    pub fn for_directory(dir: &Path) -> Self {
        Self(dir.join("masks_{class}").join("{stem}.png").to_string_lossy().into_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn resolve(&self, frame_index: usize, stem: Option<&str>, kind: ClassKind) -> PathBuf {
        let mut out = String::with_capacity(self.0.len() + 16);
        let mut rest = self.0.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let Some(close) = rest[open..].find('}') else {
                out.push_str(&rest[open..]);
                rest = "";
                break;
            };
            let key = &rest[open + 1..open + close];
            match key {
                "class" => out.push_str(kind.as_str()),
                "stem" => out.push_str(stem.unwrap_or_default()),
                "frame" => out.push_str(&frame_index.to_string()),
                _ => match key.strip_prefix("frame:").and_then(|w| w.parse::<usize>().ok()) {
                    Some(width) => out.push_str(&format!("{frame_index:0width$}")),
                    None => out.push_str(&rest[open..=open + close]),
                },
            }
            rest = &rest[open + close + 1..];
        }
        out.push_str(rest);
        PathBuf::from(out)
    }
}

/// Read a single-channel mask raster; pixels above 127 are set.
pub fn load_mask_file(path: &Path, kind: ClassKind) -> Result<BinaryMask, SegmentationError> {
    let bytes = std::fs::read(path).map_err(|source| SegmentationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fmt_err = |message: String| SegmentationError::Format {
        path: path.to_path_buf(),
        message,
    };
    let img = image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| fmt_err(e.to_string()))?
        .decode()
        .map_err(|e| fmt_err(e.to_string()))?;
    Ok(BinaryMask::from_gray(&img.into_luma8(), kind))
}

/// Resolve and read the mask for one frame and class.
pub fn load_frame_mask(
    template: &MaskTemplate,
    frame_index: usize,
    stem: Option<&str>,
    kind: ClassKind,
) -> Result<BinaryMask, SegmentationError> {
    load_mask_file(&template.resolve(frame_index, stem, kind), kind)
}

#[cfg(feature = "onnx")]
mod onnx {
    use std::path::Path;
    use std::sync::Arc;

    use tract_onnx::prelude::*;

    use super::{ClassKind, ProbabilityMap};
    use crate::error::SegmentationError;
    use crate::ingest::MODEL_SIZE;

    /// A loaded single-output segmentation model with a fixed
    /// `1x1x512x512` float input.
    #[derive(Clone)]
    pub struct OnnxModel {
        plan: Arc<TypedRunnableModel>,
        kind: ClassKind,
    }

    impl std::fmt::Debug for OnnxModel {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.debug_struct("OnnxModel").field("kind", &self.kind).finish_non_exhaustive()
        }
    }

    fn input_shape() -> [usize; 4] {
        [1, 1, MODEL_SIZE as usize, MODEL_SIZE as usize]
    }

    impl OnnxModel {
        pub fn load(path: &Path, kind: ClassKind) -> Result<Self, SegmentationError> {
            let load_err = |e: TractError| SegmentationError::ModelLoad {
                path: path.to_path_buf(),
                message: format!("{e:#}"),
            };
            let plan = tract_onnx::onnx()
                .model_for_path(path)
                .and_then(|m| m.with_input_fact(0, f32::fact(input_shape()).into()))
                .and_then(|m| m.into_optimized())
                .and_then(|m| m.into_runnable())
                .map_err(load_err)?;
            Ok(Self { plan, kind })
        }

        pub fn kind(&self) -> ClassKind {
            self.kind
        }

        /// Run the model on a normalized row-major grid of `width x height`.
        pub fn predict(&self, input: &[f32], width: u32, height: u32) -> Result<ProbabilityMap, SegmentationError> {
            if (width, height) != (MODEL_SIZE, MODEL_SIZE) || input.len() != (width * height) as usize {
                return Err(SegmentationError::Inference(format!(
                    "model expects a {MODEL_SIZE}x{MODEL_SIZE} input, got {width}x{height}"
                )));
            }
            let infer_err = |e: TractError| SegmentationError::Inference(format!("{e:#}"));
            let tensor = Tensor::from_shape(&input_shape(), input).map_err(infer_err)?;
            let outputs = self.plan.run(tvec!(tensor.into())).map_err(infer_err)?;
            let out = outputs
                .first()
                .ok_or_else(|| SegmentationError::Inference("model produced no output".into()))?;
            let view = out.to_plain_array_view::<f32>().map_err(infer_err)?;
            if view.shape() != input_shape() {
                return Err(SegmentationError::Inference(format!(
                    "model output shape {:?} does not match {:?}",
                    view.shape(),
                    input_shape()
                )));
            }
            let values: Vec<f32> = view.iter().copied().collect();
            ProbabilityMap::new(values, MODEL_SIZE, MODEL_SIZE, self.kind)
        }
    }
}

#[cfg(feature = "onnx")]
pub use onnx::OnnxModel;

/// Source of the two masks for each frame.
#[derive(Debug, Clone)]
pub enum SegmentationBackend {
    /// Two independently trained models, one per class.
    #[cfg(feature = "onnx")]
    Models {
        aponeurosis: OnnxModel,
        fascicle: OnnxModel,
    },
    /// Precomputed mask files.
    MaskFiles(MaskTemplate),
}

/// Both masks for a frame, in the frame's original resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMasks {
    pub aponeurosis: BinaryMask,
    pub fascicle: BinaryMask,
}

impl SegmentationBackend {
    #[cfg(feature = "onnx")]
    pub fn from_models(aponeurosis: &Path, fascicle: &Path) -> Result<Self, SegmentationError> {
        Ok(Self::Models {
            aponeurosis: OnnxModel::load(aponeurosis, ClassKind::Aponeurosis)?,
            fascicle: OnnxModel::load(fascicle, ClassKind::Fascicle)?,
        })
    }

    #[cfg(not(feature = "onnx"))]
    pub fn from_models(_aponeurosis: &Path, _fascicle: &Path) -> Result<Self, SegmentationError> {
        Err(SegmentationError::OnnxUnavailable)
    }

    pub fn from_masks(template: MaskTemplate) -> Self {
        Self::MaskFiles(template)
    }

    /// Probability maps for a model-grid image. Only the model backend
    /// produces probabilities.
    #[cfg_attr(not(feature = "onnx"), allow(unused_variables))]
    pub fn infer(&self, model_input: &GrayImage) -> Result<(ProbabilityMap, ProbabilityMap), SegmentationError> {
        match self {
            #[cfg(feature = "onnx")]
            Self::Models { aponeurosis, fascicle } => {
                let input = normalize_input(model_input);
                let (w, h) = model_input.dimensions();
                Ok((aponeurosis.predict(&input, w, h)?, fascicle.predict(&input, w, h)?))
            }
            Self::MaskFiles(_) => Err(SegmentationError::Inference(
                "the mask-file backend does not produce probabilities".into(),
            )),
        }
    }

    /// Masks for `frame` at its original resolution. Mask files may be stored
    /// at frame resolution or on the 512x512 model grid.
    pub fn masks_for(&self, frame: &Frame, threshold: f32) -> Result<FrameMasks, SegmentationError> {
        match self {
            #[cfg(feature = "onnx")]
            Self::Models { .. } => {
                let (grid, _) = ingest::resize_for_model(frame);
                let (apo, fasc) = self.infer(&grid)?;
                Ok(FrameMasks {
                    aponeurosis: ingest::upsample_mask_to_frame(&binarize(&apo, threshold)?, frame),
                    fascicle: ingest::upsample_mask_to_frame(&binarize(&fasc, threshold)?, frame),
                })
            }
            Self::MaskFiles(template) => {
                let _ = threshold;
                let load = |kind| -> Result<BinaryMask, SegmentationError> {
                    let mask = load_frame_mask(template, frame.index, frame.name.as_deref(), kind)?;
                    let frame_dims = frame.pixels.dimensions();
                    match mask.dimensions() {
                        d if d == frame_dims => Ok(mask),
                        (MODEL_SIZE, MODEL_SIZE) => Ok(ingest::upsample_mask_to_frame(&mask, frame)),
                        found => Err(SegmentationError::MaskDimensions {
                            expected: frame_dims,
                            found,
                        }),
                    }
                };
                Ok(FrameMasks {
                    aponeurosis: load(ClassKind::Aponeurosis)?,
                    fascicle: load(ClassKind::Fascicle)?,
                })
            }
        }
    }
}
