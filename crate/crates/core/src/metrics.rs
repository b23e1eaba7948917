//! Agreement statistics: mask IoU, Bland-Altman limits of agreement and the
//! ICC(2,1) intraclass correlation.

use crate::error::MetricsError;
use crate::segmentation::BinaryMask;

/// Normal quantile for 95% limits of agreement.
pub const LOA_MULTIPLIER: f64 = 1.96;

/// Intersection over union of two equally sized masks. Two empty masks agree
/// perfectly (1.0).
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    if a.dimensions() != b.dimensions() {
        return Err(MetricsError::DimensionMismatch {
            a: a.dimensions(),
            b: b.dimensions(),
        });
    }
    let (inter, union) = a
        .bits()
        .iter()
        .zip(b.bits())
        .fold((0usize, 0usize), |(i, u), (&x, &y)| (i + (x && y) as usize, u + (x || y) as usize));
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementStats {
    /// Mean of `a - b`.
    pub bias: f64,
    /// Sample (n - 1) standard deviation of the differences.
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    pub n: usize,
}

/// Bland-Altman bias and 95% limits of agreement for paired values, with
/// differences taken as `a - b`.
pub fn bland_altman(pairs: &[(f64, f64)]) -> Result<AgreementStats, MetricsError> {
    let n = pairs.len();
    if n < 2 {
        return Err(MetricsError::InsufficientData { needed: 2, got: n });
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let bias = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - bias).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd_diff = var.sqrt();
    Ok(AgreementStats {
        bias,
        sd_diff,
        loa_low: bias - LOA_MULTIPLIER * sd_diff,
        loa_high: bias + LOA_MULTIPLIER * sd_diff,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IccResult {
    pub icc: f64,
    /// Between-targets mean square.
    pub ms_rows: f64,
    /// Between-methods mean square.
    pub ms_cols: f64,
    pub ms_error: f64,
    /// Targets (rows).
    pub n: usize,
    /// Methods or raters (columns).
    pub k: usize,
}

/// ICC(2,1) (two-way random effects, absolute agreement, single measures)
/// for an `n x k` matrix of targets by methods.
pub fn icc_2_1<R: AsRef<[f64]>>(rows: &[R]) -> Result<IccResult, MetricsError> {
    let n = rows.len();
    if n < 2 {
        return Err(MetricsError::InsufficientData { needed: 2, got: n });
    }
    let k = rows[0].as_ref().len();
    if k < 2 {
        return Err(MetricsError::InsufficientData { needed: 2, got: k });
    }
    for (row, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != k {
            return Err(MetricsError::RaggedMatrix {
                row,
                expected: k,
                found: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
    }

    let (nf, kf) = (n as f64, k as f64);
    let row_means: Vec<f64> = rows.iter().map(|r| r.as_ref().iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r.as_ref()[j]).sum::<f64>() / nf)
        .collect();
    let grand = row_means.iter().sum::<f64>() / nf;

    let ss_rows = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = nf * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_error: f64 = rows
        .iter()
        .zip(&row_means)
        .flat_map(|(r, rm)| {
            r.as_ref()
                .iter()
                .zip(&col_means)
                .map(move |(x, cm)| (x - rm - cm + grand).powi(2))
        })
        .sum();

    let ms_rows = ss_rows / (nf - 1.0);
    let ms_cols = ss_cols / (kf - 1.0);
    let ms_error = ss_error / ((nf - 1.0) * (kf - 1.0));

    let denom = ms_rows + (kf - 1.0) * ms_error + kf / nf * (ms_cols - ms_error);
    // relative to the data scale, so constant shifts and rescaling don't matter
    let scale = ms_rows.abs() + ms_cols.abs() + ms_error.abs();
    if denom == 0.0 || scale == 0.0 || denom.abs() <= 1e-12 * scale {
        return Err(MetricsError::DegenerateAnova);
    }
    Ok(IccResult {
        icc: (ms_rows - ms_error) / denom,
        ms_rows,
        ms_cols,
        ms_error,
        n,
        k,
    })
}

/// Keep only pairs where both values are present.
pub fn complete_pairs(a: &[Option<f64>], b: &[Option<f64>]) -> Vec<(f64, f64)> {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect()
}
