//! Frame decoding, sequence assembly and resampling to/from the model grid.

use std::path::{Path, PathBuf};
use std::process::Command;

use image::imageops::{self, FilterType};
use image::GrayImage;
use rayon::prelude::*;

use crate::error::IngestError;
use crate::segmentation::BinaryMask;

/// Side length of the square grid the segmentation models consume.
pub const MODEL_SIZE: u32 = 512;

/// Smallest accepted frame side.
pub const MIN_FRAME_SIDE: u32 = 64;

/// Default external decoder: writes every video frame as a numbered PNG.
pub const DEFAULT_DECODER: &str = "ffmpeg -nostdin -loglevel error -i {input} {outdir}/frame_%06d.png";

const RASTER_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "tif", "tiff", "bmp"];

/// One grayscale frame in its original resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub pixels: GrayImage,
    pub index: usize,
    pub timestamp_s: Option<f64>,
    /// File stem the frame was read from, when it came from disk.
    pub name: Option<String>,
}

impl Frame {
    pub fn new(pixels: GrayImage, index: usize) -> Result<Self, IngestError> {
        let (width, height) = pixels.dimensions();
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(IngestError::TooSmall {
                width,
                height,
                min: MIN_FRAME_SIDE,
            });
        }
        Ok(Self {
            pixels,
            index,
            timestamp_s: None,
            name: None,
        })
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub fps: Option<f64>,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Where a frame sequence comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameSource {
    /// Directory of numbered raster files.
    Directory(PathBuf),
    /// Video container handed to an external decoder command. The template
    /// must contain `{input}` and `{outdir}` placeholders.
    Video { input: PathBuf, decoder: String },
}

/// Multipliers mapping model-grid coordinates back to the original frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFactors {
    pub sx: f64,
    pub sy: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Decode a raster file into a grayscale frame (color is converted by
/// luminance).
pub fn load_image(path: &Path) -> Result<Frame, IngestError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let decoded = image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(|e| IngestError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut frame = Frame::new(decoded.into_luma8(), 0)?;
    frame.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    Ok(frame)
}

/// The trailing run of ASCII digits in a file stem, parsed as an ordinal.
pub fn trailing_ordinal(stem: &str) -> Option<u64> {
    let digits = stem.len() - stem.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    stem[stem.len() - digits..].parse().ok()
}

fn is_raster(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| RASTER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Sort raster paths by trailing ordinal, then by name. Files without an
/// ordinal sort after numbered ones.
pub fn order_frame_paths(mut paths: Vec<PathBuf>) -> Vec<PathBuf> {
    paths.sort_by_cached_key(|p| {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ordinal = trailing_ordinal(&stem);
        (ordinal.is_none(), ordinal, p.file_name().map(|n| n.to_owned()))
    });
    paths
}

/// Load every raster in `dir` as one frame sequence.
pub fn load_frame_directory(dir: &Path, fps: Option<f64>) -> Result<FrameSequence, IngestError> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && is_raster(&path) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(IngestError::EmptySequence {
            path: dir.to_path_buf(),
        });
    }
    let paths = order_frame_paths(paths);

    let mut frames = paths
        .par_iter()
        .map(|p| load_image(p))
        .collect::<Result<Vec<_>, _>>()?;

    let expected = frames[0].pixels.dimensions();
    for (index, frame) in frames.iter_mut().enumerate() {
        let found = frame.pixels.dimensions();
        if found != expected {
            return Err(IngestError::InconsistentDimensions {
                index,
                expected,
                found,
            });
        }
        frame.index = index;
        frame.timestamp_s = fps.map(|f| index as f64 / f);
    }
    Ok(FrameSequence { frames, fps })
}

/// Expand a decoder template into a program and its arguments. Tokens are
/// split on whitespace before substitution, so paths containing spaces survive.
pub fn decoder_command(template: &str, input: &Path, outdir: &Path) -> Result<Command, IngestError> {
    if !template.contains("{input}") || !template.contains("{outdir}") {
        return Err(IngestError::Decoder(format!(
            "template `{template}` must contain {{input}} and {{outdir}}"
        )));
    }
    let input = input.to_string_lossy();
    let outdir = outdir.to_string_lossy();
    let mut tokens = template
        .split_whitespace()
        .map(|t| t.replace("{input}", &input).replace("{outdir}", &outdir));
    let program = tokens
        .next()
        .ok_or_else(|| IngestError::Decoder("empty decoder template".into()))?;
    let mut cmd = Command::new(program);
    cmd.args(tokens);
    Ok(cmd)
}

/// Load a frame sequence from a directory, or from a video via the external
/// decoder (frames are materialized in a temporary directory).
pub fn load_frame_sequence(source: &FrameSource, fps: Option<f64>) -> Result<FrameSequence, IngestError> {
    match source {
        FrameSource::Directory(dir) => load_frame_directory(dir, fps),
        FrameSource::Video { input, decoder } => {
            if !input.exists() {
                return Err(IngestError::Io {
                    path: input.clone(),
                    source: std::io::Error::from(std::io::ErrorKind::NotFound),
                });
            }
            let outdir = tempfile::tempdir().map_err(io_err(input))?;
            let status = decoder_command(decoder, input, outdir.path())?
                .status()
                .map_err(|e| IngestError::Decoder(format!("cannot run `{decoder}`: {e}")))?;
            if !status.success() {
                return Err(IngestError::Decoder(format!("`{decoder}` exited with {status}")));
            }
            load_frame_directory(outdir.path(), fps)
        }
    }
}

/// Resample a frame to the model grid (bilinear) and report the scale factors
/// `sx = width / 512`, `sy = height / 512`.
pub fn resize_for_model(frame: &Frame) -> (GrayImage, ScaleFactors) {
    let (w, h) = frame.pixels.dimensions();
    let scale = ScaleFactors {
        sx: w as f64 / MODEL_SIZE as f64,
        sy: h as f64 / MODEL_SIZE as f64,
    };
    if (w, h) == (MODEL_SIZE, MODEL_SIZE) {
        return (frame.pixels.clone(), scale);
    }
    let grid = imageops::resize(&frame.pixels, MODEL_SIZE, MODEL_SIZE, FilterType::Triangle);
    (grid, scale)
}

/// Nearest-neighbour upsampling of a model-grid mask to `width x height`.
pub fn upsample_mask(mask: &BinaryMask, width: u32, height: u32) -> BinaryMask {
    if mask.dimensions() == (width, height) {
        return mask.clone();
    }
    let (mw, mh) = mask.dimensions();
    let col_map: Vec<u32> = (0..width)
        .map(|x| ((x as u64 * mw as u64) / width as u64) as u32)
        .collect();
    let mut out = BinaryMask::new(width, height, mask.kind());
    for y in 0..height {
        let sy = ((y as u64 * mh as u64) / height as u64) as u32;
        for (x, &sx) in col_map.iter().enumerate() {
            if mask.get(sx, sy) {
                out.set(x as u32, y, true);
            }
        }
    }
    out
}

pub fn upsample_mask_to_frame(mask: &BinaryMask, frame: &Frame) -> BinaryMask {
    upsample_mask(mask, frame.width(), frame.height())
}
