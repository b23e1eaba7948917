//! Results tables, comparison exports and annotated overlays.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use font8x8::{UnicodeFonts, BASIC_FONTS};
use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

use crate::architecture::FrameResult;
use crate::error::ReportError;
use crate::geometry::ColumnPolyline;
use crate::ingest::Frame;

/// Column order of the per-fascicle results table.
pub const RESULTS_HEADER: [&str; 11] = [
    "frame",
    "timestamp_s",
    "fascicle_id",
    "length_mm",
    "pennation_deg",
    "x_start",
    "x_end",
    "thickness_mm",
    "agg_length_mm",
    "agg_pennation_deg",
    "n_fascicles",
];

pub const COMPARISON_HEADER: [&str; 5] = ["frame", "value_a", "value_b", "difference", "mean"];

/// Four decimal places, without a sign on zero.
pub fn format_value(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path).map(BufWriter::new).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write the long-format results table: one row per fascicle, or a single row
/// with empty fascicle fields for frames without fascicles.
pub fn write_results_to<W: Write>(results: &[FrameResult], out: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        let frame = r.index.to_string();
        let ts = opt(r.timestamp_s);
        let thickness = opt(r.thickness_mm);
        let agg_len = opt(r.aggregate_length_mm);
        let agg_pen = opt(r.aggregate_pennation_deg);
        let count = r.fascicles.len().to_string();
        if r.fascicles.is_empty() {
            w.write_record([&frame, &ts, "", "", "", "", "", &thickness, &agg_len, &agg_pen, &count])?;
            continue;
        }
        for (i, f) in r.fascicles.iter().enumerate() {
            w.write_record([
                &frame,
                &ts,
                &i.to_string(),
                &format_value(f.length_mm),
                &format_value(f.pennation_deg),
                &format_value(f.x_start()),
                &format_value(f.x_end()),
                &thickness,
                &agg_len,
                &agg_pen,
                &count,
            ])?;
        }
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}

pub fn write_results(results: &[FrameResult], path: &Path) -> Result<(), ReportError> {
    write_results_to(results, create(path)?)
}

/// One parsed row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub frame: usize,
    pub timestamp_s: Option<f64>,
    pub fascicle_id: Option<usize>,
    pub length_mm: Option<f64>,
    pub pennation_deg: Option<f64>,
    pub x_start: Option<f64>,
    pub x_end: Option<f64>,
    pub thickness_mm: Option<f64>,
    pub agg_length_mm: Option<f64>,
    pub agg_pennation_deg: Option<f64>,
    pub n_fascicles: usize,
}

pub fn read_results_from<R: Read>(input: R) -> Result<Vec<ResultRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(ReportError::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let float = |j: usize| -> Result<Option<f64>, ReportError> {
            let s = field(j);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| ReportError::Parse {
                line,
                message: format!("{}: `{s}` is not a number", RESULTS_HEADER[j]),
            })
        };
        let int = |j: usize| -> Result<Option<usize>, ReportError> {
            let s = field(j);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| ReportError::Parse {
                line,
                message: format!("{}: `{s}` is not an integer", RESULTS_HEADER[j]),
            })
        };
        let required = |j: usize| -> Result<usize, ReportError> {
            int(j)?.ok_or_else(|| ReportError::Parse {
                line,
                message: format!("{} is required", RESULTS_HEADER[j]),
            })
        };
        rows.push(ResultRow {
            frame: required(0)?,
            timestamp_s: float(1)?,
            fascicle_id: int(2)?,
            length_mm: float(3)?,
            pennation_deg: float(4)?,
            x_start: float(5)?,
            x_end: float(6)?,
            thickness_mm: float(7)?,
            agg_length_mm: float(8)?,
            agg_pennation_deg: float(9)?,
            n_fascicles: required(10)?,
        });
    }
    Ok(rows)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, ReportError> {
    let file = File::open(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_results_from(file)
}

/// A per-frame quantity that can be pulled out of a results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Length,
    Pennation,
    Thickness,
}

/// One value per frame (the aggregate, or thickness), indexed by frame
/// number; frames absent from the table are `None`.
pub fn frame_series(rows: &[ResultRow], quantity: Quantity) -> Vec<Option<f64>> {
    let len = rows.iter().map(|r| r.frame + 1).max().unwrap_or(0);
    let mut out = vec![None; len];
    for r in rows {
        let v = match quantity {
            Quantity::Length => r.agg_length_mm,
            Quantity::Pennation => r.agg_pennation_deg,
            Quantity::Thickness => r.thickness_mm,
        };
        if out[r.frame].is_none() {
            out[r.frame] = v;
        }
    }
    out
}

/// The columns a Bland-Altman plot needs: frame, both values, their
/// difference (`a - b`) and mean. Missing values leave empty cells.
pub fn export_comparison_to<W: Write>(a: &[Option<f64>], b: &[Option<f64>], out: W) -> Result<(), ReportError> {
    if a.len() != b.len() {
        return Err(ReportError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_HEADER)?;
    for (i, (va, vb)) in a.iter().zip(b).enumerate() {
        let both = va.zip(*vb);
        w.write_record([
            i.to_string(),
            opt(*va),
            opt(*vb),
            opt(both.map(|(x, y)| x - y)),
            opt(both.map(|(x, y)| 0.5 * (x + y))),
        ])?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}

pub fn export_comparison(a: &[Option<f64>], b: &[Option<f64>], path: &Path) -> Result<(), ReportError> {
    export_comparison_to(a, b, create(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayStyle {
    pub superficial_color: Rgb<u8>,
    pub deep_color: Rgb<u8>,
    pub fascicle_color: Rgb<u8>,
    pub text_color: Rgb<u8>,
    pub banner_color: Rgb<u8>,
    /// Integer magnification of the 8x8 banner font.
    pub text_scale: u32,
    pub show_banner: bool,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            superficial_color: Rgb([0, 200, 255]),
            deep_color: Rgb([255, 200, 0]),
            fascicle_color: Rgb([255, 40, 40]),
            text_color: Rgb([255, 255, 255]),
            banner_color: Rgb([0, 0, 0]),
            text_scale: 2,
            show_banner: true,
        }
    }
}

/// Banner text summarizing a frame.
pub fn banner_text(result: &FrameResult) -> String {
    let thickness = result
        .thickness_mm
        .map(|t| format!("{t:.1}"))
        .unwrap_or_else(|| "-".into());
    match (result.aggregate_length_mm, result.aggregate_pennation_deg) {
        (Some(l), Some(p)) if !result.fascicles.is_empty() || result.gap_filled => {
            format!("L={l:.1} PA={p:.1} T={thickness}")
        }
        _ if result.thickness_mm.is_some() => format!("no fascicles detected T={thickness}"),
        _ => "no fascicles detected".to_string(),
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x0: u32, y0: u32, scale: u32, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    for (i, ch) in text.chars().enumerate() {
        let Some(glyph) = BASIC_FONTS.get(ch) else { continue };
        let gx = x0 + i as u32 * 8 * scale;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8u32 {
                if bits & (1 << col) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let (px, py) = (gx + col * scale + dx, y0 + row as u32 * scale + dy);
                        if px < w && py < h {
                            img.put_pixel(px, py, color);
                        }
                    }
                }
            }
        }
    }
}

fn draw_path(img: &mut RgbImage, path: &ColumnPolyline, color: Rgb<u8>) {
    let pts: Vec<(f32, f32)> = path.points().map(|p| (p.x as f32, p.y as f32)).collect();
    for seg in pts.windows(2) {
        draw_line_segment_mut(img, seg[0], seg[1], color);
    }
}

/// Draw aponeurosis paths, each measured fascicle between its intersection
/// points, and a summary banner over the frame.
pub fn render_overlay(frame: &Frame, result: &FrameResult, style: &OverlayStyle) -> RgbImage {
    let mut img = image::DynamicImage::ImageLuma8(frame.pixels.clone()).into_rgb8();
    if let Some(a) = &result.superficial {
        draw_path(&mut img, &a.path, style.superficial_color);
    }
    if let Some(a) = &result.deep {
        draw_path(&mut img, &a.path, style.deep_color);
    }
    for f in &result.fascicles {
        let (d, s) = (f.deep_point, f.superficial_point);
        draw_line_segment_mut(
            &mut img,
            (d.x as f32, d.y as f32),
            (s.x as f32, s.y as f32),
            style.fascicle_color,
        );
    }
    if style.show_banner {
        let scale = style.text_scale.max(1);
        let pad = 2 * scale;
        let banner_h = (8 * scale + 2 * pad).min(img.height());
        let banner = Rect::at(0, 0).of_size(img.width(), banner_h);
        draw_filled_rect_mut(&mut img, banner, style.banner_color);
        draw_text(&mut img, &banner_text(result), pad, pad, scale, style.text_color);
    }
    img
}

/// `<stem>_overlay_<frame>.png`
pub fn overlay_file_name(stem: &str, frame_index: usize) -> String {
    format!("{stem}_overlay_{frame_index:06}.png")
}

pub fn save_overlay(img: &RgbImage, path: &Path) -> Result<(), ReportError> {
    img.save(path).map_err(|e| ReportError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
