//! Reference implementations used as test oracles. They share no code with
//! the library beyond plain data types.

#![allow(dead_code, clippy::needless_range_loop)]

use std::path::Path;

use fasctrack::synthetic::{SyntheticFascicle, SyntheticScene};
use fasctrack::BinaryMask;

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Residual sum of squares of the least-squares fit of `y` on the columns of
/// `design`.
pub fn residual_ss(design: &[Vec<f64>], y: &[f64]) -> f64 {
    let p = design[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in design.iter().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * yi;
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let beta = solve(xtx, xty);
    design
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (yi - fit).powi(2)
        })
        .sum()
}

/// Dummy-coded design matrix for an `n x k` layout.
fn design(n: usize, k: usize, rows: bool, cols: bool) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..k {
            let mut r = vec![1.0];
            if rows {
                r.extend((1..n).map(|a| if a == i { 1.0 } else { 0.0 }));
            }
            if cols {
                r.extend((1..k).map(|b| if b == j { 1.0 } else { 0.0 }));
            }
            out.push(r);
        }
    }
    out
}

/// ICC(2,1) from mean squares obtained as reductions in residual sum of
/// squares between nested least-squares fits of the additive two-way model.
pub fn icc_oracle(data: &[Vec<f64>]) -> f64 {
    let (n, k) = (data.len(), data[0].len());
    let y: Vec<f64> = data.iter().flatten().copied().collect();
    let sse_full = residual_ss(&design(n, k, true, true), &y);
    let sse_without_rows = residual_ss(&design(n, k, false, true), &y);
    let sse_without_cols = residual_ss(&design(n, k, true, false), &y);
    let (nf, kf) = (n as f64, k as f64);
    let msr = (sse_without_rows - sse_full) / (nf - 1.0);
    let msc = (sse_without_cols - sse_full) / (kf - 1.0);
    let mse = sse_full / ((nf - 1.0) * (kf - 1.0));
    (msr - mse) / (msr + (kf - 1.0) * mse + kf * (msc - mse) / nf)
}

/// Mean row of set pixels in each column, `None` where a column is empty.
pub fn column_means(mask: &BinaryMask, rows: std::ops::Range<u32>) -> Vec<Option<f64>> {
    (0..mask.width())
        .map(|x| {
            let ys: Vec<f64> = rows.clone().filter(|&y| mask.get(x, y)).map(f64::from).collect();
            (!ys.is_empty()).then(|| ys.iter().sum::<f64>() / ys.len() as f64)
        })
        .collect()
}

/// Minimum distance over every pair (band point on `a`, any point on `b`).
pub fn brute_force_thickness(a: &[Option<f64>], b: &[Option<f64>], band: (usize, usize), mm_per_px: f64) -> f64 {
    let mut best = f64::INFINITY;
    for xa in band.0..=band.1 {
        let Some(ya) = a[xa] else { continue };
        for (xb, yb) in b.iter().enumerate() {
            let Some(yb) = yb else { continue };
            let d = ((xa as f64 - xb as f64).powi(2) + (ya - yb).powi(2)).sqrt() * mm_per_px;
            best = best.min(d);
        }
    }
    best
}

/// The scene used for frame `i` of the oracle-mask sequence. Some frames have
/// no fascicles and one lacks the deep aponeurosis.
pub fn sequence_scene(i: usize) -> SyntheticScene {
    let angle = 35.0 + (i % 11) as f64 * 2.5;
    let fascicles = if i % 9 == 4 {
        Vec::new()
    } else {
        (0..3)
            .map(|j| SyntheticFascicle::new(150.0 + 110.0 * j as f64, 230.0 + 10.0 * j as f64, angle + j as f64, 70.0))
            .collect()
    };
    let mut scene = SyntheticScene {
        superficial_y: 90.0 + (i % 5) as f64,
        fascicles,
        ..Default::default()
    };
    if i == 17 {
        scene.deep_y = 1000.0;
    }
    scene
}

pub fn frame_stem(i: usize) -> String {
    format!("frame_{i:06}")
}

/// Write the oracle-mask sequence (frames plus masks) into `dir`.
pub fn write_oracle_sequence(dir: &Path, frames: usize) {
    for i in 0..frames {
        sequence_scene(i).write_oracle_files(dir, &frame_stem(i)).unwrap();
    }
}
