//! Synthetic ultrasound-like scenes with known geometry.
//!
//! A scene has two horizontal aponeurosis bars and any number of straight
//! fascicle stripes. Stripes rise to the right (negative `dy/dx` in image
//! coordinates), so the deep insertion is to the left of the superficial one.

use std::path::Path;

use image::{GrayImage, Luma};

use crate::geometry::Calibration;
use crate::segmentation::{BinaryMask, ClassKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticFascicle {
    pub center_x: f64,
    pub center_y: f64,
    /// Angle to the horizontal, in degrees.
    pub pennation_deg: f64,
    /// The stripe covers rows `center_y ± half_height`.
    pub half_height: f64,
}

impl SyntheticFascicle {
    pub fn new(center_x: f64, center_y: f64, pennation_deg: f64, half_height: f64) -> Self {
        Self {
            center_x,
            center_y,
            pennation_deg,
            half_height,
        }
    }

    pub fn slope(&self) -> f64 {
        -self.pennation_deg.to_radians().tan()
    }

    fn y_at(&self, x: f64) -> f64 {
        self.center_y + self.slope() * (x - self.center_x)
    }

    fn x_range(&self) -> (f64, f64) {
        let half_w = self.half_height / self.pennation_deg.to_radians().tan();
        (self.center_x - half_w, self.center_x + half_w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub width: u32,
    pub height: u32,
    pub superficial_y: f64,
    pub deep_y: f64,
    /// Aponeurosis bars cover `y ± apo_half_thickness` rows.
    pub apo_half_thickness: u32,
    pub fascicle_half_thickness: u32,
    pub fascicles: Vec<SyntheticFascicle>,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            superficial_y: 100.0,
            deep_y: 400.0,
            apo_half_thickness: 2,
            fascicle_half_thickness: 1,
            fascicles: Vec::new(),
        }
    }
}

impl SyntheticScene {
    /// Vertical distance between the aponeurosis centrelines.
    pub fn gap_px(&self) -> f64 {
        self.deep_y - self.superficial_y
    }

    pub fn aponeurosis_mask(&self) -> BinaryMask {
        let r = self.apo_half_thickness as f64;
        let (s, d) = (self.superficial_y.round(), self.deep_y.round());
        BinaryMask::from_fn(self.width, self.height, ClassKind::Aponeurosis, |_, y| {
            let y = y as f64;
            (y - s).abs() <= r || (y - d).abs() <= r
        })
    }

    pub fn fascicle_mask(&self) -> BinaryMask {
        let mut mask = BinaryMask::new(self.width, self.height, ClassKind::Fascicle);
        let r = self.fascicle_half_thickness as i64;
        let max_y = self.height as i64 - 1;
        for f in &self.fascicles {
            let (x0, x1) = f.x_range();
            let (c0, c1) = (x0.round().max(0.0) as i64, x1.round().min(self.width as f64 - 1.0) as i64);
            for c in c0..=c1 {
                let xc = c as f64;
                let a = f.y_at(xc - 0.5).round() as i64;
                let b = f.y_at(xc + 0.5).round() as i64;
                let centre = f.y_at(xc).round() as i64;
                let lo = (a.min(b).min(centre) - r).max(0);
                let hi = (a.max(b).max(centre) + r).min(max_y);
                for row in lo..=hi {
                    mask.set(c as u32, row as u32, true);
                }
            }
        }
        mask
    }

    /// A grayscale frame showing the scene's structures.
    pub fn frame_image(&self) -> GrayImage {
        let apo = self.aponeurosis_mask();
        let fasc = self.fascicle_mask();
        GrayImage::from_fn(self.width, self.height, |x, y| {
            let texture = ((x * 7 + y * 13) % 17) as u8;
            Luma([if apo.get(x, y) {
                220
            } else if fasc.get(x, y) {
                130 + texture
            } else {
                30 + texture
            }])
        })
    }

    /// Analytic fascicle length between the two aponeurosis centrelines for a
    /// straight fascicle at `pennation_deg`.
    pub fn expected_length_mm(&self, pennation_deg: f64, cal: &Calibration) -> f64 {
        let gap = self.gap_px();
        let dx = gap / pennation_deg.to_radians().tan();
        (dx * cal.mm_per_px_x()).hypot(gap * cal.mm_per_px_y())
    }

    /// Write `<dir>/<stem>.png` plus masks in `<dir>/masks_<class>/<stem>.png`.
    pub fn write_oracle_files(&self, dir: &Path, stem: &str) -> std::io::Result<()> {
        let to_io = |e: image::ImageError| std::io::Error::other(e.to_string());
        std::fs::create_dir_all(dir)?;
        self.frame_image().save(dir.join(format!("{stem}.png"))).map_err(to_io)?;
        for (class, mask) in [
            (ClassKind::Aponeurosis, self.aponeurosis_mask()),
            (ClassKind::Fascicle, self.fascicle_mask()),
        ] {
            let sub = dir.join(format!("masks_{class}"));
            std::fs::create_dir_all(&sub)?;
            mask.to_gray().save(sub.join(format!("{stem}.png"))).map_err(to_io)?;
        }
        Ok(())
    }
}
