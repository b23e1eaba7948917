//! Numeric primitives shared by the measurement pipeline.
//!
//! All coordinates are image pixels: `x` is the column (increasing to the
//! right) and `y` is the row (increasing downward). Slopes are `dy/dx` in that
//! frame.

use crate::error::GeometryError;

/// A point in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// A straight line `y = slope * x + intercept` fitted to pixel data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedLine {
    pub slope: f64,
    pub intercept: f64,
    /// Horizontal extent of the data the line was fitted to.
    pub x_min: f64,
    pub x_max: f64,
}

impl FittedLine {
    pub fn y_at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn x_center(&self) -> f64 {
        0.5 * (self.x_min + self.x_max)
    }
}

/// A path with exactly one `y` value per consecutive column, starting at
/// `x_start`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPolyline {
    x_start: usize,
    ys: Vec<f64>,
}

impl ColumnPolyline {
    pub fn new(x_start: usize, ys: Vec<f64>) -> Result<Self, GeometryError> {
        if ys.is_empty() {
            return Err(GeometryError::EmptyPolyline);
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self { x_start, ys })
    }

    pub fn x_start(&self) -> usize {
        self.x_start
    }

    /// Last column covered (inclusive).
    pub fn x_end(&self) -> usize {
        self.x_start + self.ys.len() - 1
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn contains_column(&self, x: usize) -> bool {
        x >= self.x_start && x <= self.x_end()
    }

    /// `y` at an integer column, if covered.
    pub fn y_at_column(&self, x: usize) -> Option<f64> {
        x.checked_sub(self.x_start)
            .and_then(|i| self.ys.get(i))
            .copied()
    }

    /// Linearly interpolated `y` at a fractional column inside the extent.
    pub fn y_at(&self, x: f64) -> Option<f64> {
        let lo = self.x_start as f64;
        let hi = self.x_end() as f64;
        if !(lo..=hi).contains(&x) {
            return None;
        }
        let offset = x - lo;
        let i = (offset.floor() as usize).min(self.ys.len() - 1);
        let t = offset - i as f64;
        if t == 0.0 || i + 1 == self.ys.len() {
            return Some(self.ys[i]);
        }
        Some(self.ys[i] + t * (self.ys[i + 1] - self.ys[i]))
    }

    pub fn mean_y(&self) -> f64 {
        self.ys.iter().sum::<f64>() / self.ys.len() as f64
    }

    pub fn points(&self) -> impl Iterator<Item = Point2> + '_ {
        self.ys
            .iter()
            .enumerate()
            .map(move |(i, &y)| Point2::new((self.x_start + i) as f64, y))
    }

    /// Extend the path to cover `[0, width)`, continuing each flank linearly
    /// with the least-squares slope of its outermost `flank_window` columns.
    ///
    /// Returns the extended path and the number of columns added on the left
    /// and right.
    pub fn extrapolated(&self, width: usize, flank_window: usize) -> (Self, usize, usize) {
        let add_left = self.x_start;
        let add_right = width.saturating_sub(self.x_end() + 1);
        if add_left == 0 && add_right == 0 {
            return (self.clone(), 0, 0);
        }

        let window = flank_window.max(2).min(self.ys.len());
        let flank_slope = |points: &[Point2]| {
            fit_line_least_squares(points)
                .map(|l| l.slope)
                .unwrap_or(0.0)
        };
        let all: Vec<Point2> = self.points().collect();
        let left_slope = flank_slope(&all[..window]);
        let right_slope = flank_slope(&all[all.len() - window..]);

        let first = self.ys[0];
        let last = self.ys[self.ys.len() - 1];
        let mut ys = Vec::with_capacity(add_left + self.ys.len() + add_right);
        for c in 0..add_left {
            ys.push(first - left_slope * (self.x_start - c) as f64);
        }
        ys.extend_from_slice(&self.ys);
        for step in 1..=add_right {
            ys.push(last + right_slope * step as f64);
        }
        (Self { x_start: 0, ys }, add_left, add_right)
    }
}

/// Calibration from pixels to millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    mm_per_px_x: f64,
    mm_per_px_y: f64,
}

impl Calibration {
    pub fn new(mm_per_px_x: f64, mm_per_px_y: f64) -> Result<Self, GeometryError> {
        for v in [mm_per_px_x, mm_per_px_y] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::InvalidCalibration(v));
            }
        }
        Ok(Self {
            mm_per_px_x,
            mm_per_px_y,
        })
    }

    pub fn isotropic(mm_per_px: f64) -> Result<Self, GeometryError> {
        Self::new(mm_per_px, mm_per_px)
    }

    pub fn mm_per_px_x(&self) -> f64 {
        self.mm_per_px_x
    }

    pub fn mm_per_px_y(&self) -> f64 {
        self.mm_per_px_y
    }

    /// Multiply both scales by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self, GeometryError> {
        Self::new(self.mm_per_px_x * k, self.mm_per_px_y * k)
    }
}

/// Ordinary least squares fit of `y` on `x`.
pub fn fit_line_least_squares(points: &[Point2]) -> Result<FittedLine, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::DegenerateFit);
    }
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    let (mx, my) = (sx / n, sy / n);

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for p in points {
        let dx = p.x - mx;
        sxx += dx * dx;
        sxy += dx * (p.y - my);
        x_min = x_min.min(p.x);
        x_max = x_max.max(p.x);
    }
    if x_max <= x_min || sxx <= 0.0 {
        return Err(GeometryError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if !(slope.is_finite() && intercept.is_finite()) {
        return Err(GeometryError::DegenerateFit);
    }
    Ok(FittedLine {
        slope,
        intercept,
        x_min,
        x_max,
    })
}

/// Where `line` crosses `apo`, found by scanning columns for a sign change of
/// `line_y - apo_y` and interpolating linearly between the bracketing columns.
///
/// When the line crosses more than once, the crossing closest to the centre of
/// the line's source data wins.
pub fn line_polyline_intersection(line: &FittedLine, apo: &ColumnPolyline) -> Option<Point2> {
    let center = line.x_center();
    let mut best: Option<Point2> = None;
    let mut consider = |p: Point2| match best {
        Some(b) if (b.x - center).abs() <= (p.x - center).abs() => {}
        _ => best = Some(p),
    };

    let residual = |i: usize| {
        let x = (apo.x_start + i) as f64;
        line.y_at(x) - apo.ys[i]
    };
    let mut prev = residual(0);
    if prev == 0.0 {
        consider(Point2::new(apo.x_start as f64, apo.ys[0]));
    }
    for i in 1..apo.ys.len() {
        let cur = residual(i);
        let x1 = (apo.x_start + i) as f64;
        if cur == 0.0 {
            consider(Point2::new(x1, apo.ys[i]));
        } else if prev != 0.0 && (prev < 0.0) != (cur < 0.0) {
            let t = prev / (prev - cur);
            let x = x1 - 1.0 + t;
            let y = apo.ys[i - 1] + t * (apo.ys[i] - apo.ys[i - 1]);
            consider(Point2::new(x, y));
        }
        prev = cur;
    }
    best
}

/// Least-squares slope of `apo` over columns `[x0, x0 + window_px)`, falling
/// back to `[x0 - window_px, x0]` when fewer than two columns remain ahead.
pub fn local_slope(apo: &ColumnPolyline, x0: usize, window_px: usize) -> Result<f64, GeometryError> {
    if !apo.contains_column(x0) {
        return Err(GeometryError::OutOfExtent(x0));
    }
    let fit = |lo: usize, hi: usize| -> Result<f64, GeometryError> {
        let pts: Vec<Point2> = (lo..=hi)
            .map(|c| Point2::new(c as f64, apo.y_at_column(c).unwrap_or_default()))
            .collect();
        fit_line_least_squares(&pts).map(|l| l.slope)
    };

    let forward_end = (x0 + window_px.saturating_sub(1)).min(apo.x_end());
    if forward_end > x0 {
        return fit(x0, forward_end);
    }
    let backward_start = x0.saturating_sub(window_px).max(apo.x_start);
    if backward_start < x0 {
        return fit(backward_start, x0);
    }
    Err(GeometryError::DegenerateFit)
}

/// Absolute angle between two lines given by their slopes, in degrees, within
/// `[0, 90]`.
pub fn angle_between(fascicle_slope: f64, apo_slope: f64) -> f64 {
    let diff = (fascicle_slope.atan() - apo_slope.atan()).abs().to_degrees();
    if diff > 90.0 {
        180.0 - diff
    } else {
        diff
    }
}

/// Euclidean distance in millimetres with per-axis scaling.
pub fn calibrated_distance(a: Point2, b: Point2, cal: &Calibration) -> f64 {
    let dx = (b.x - a.x) * cal.mm_per_px_x;
    let dy = (b.y - a.y) * cal.mm_per_px_y;
    dx.hypot(dy)
}

/// Shortest calibrated distance from `p` to the piecewise-linear path through
/// the polyline's column samples.
pub fn point_to_polyline_distance(p: Point2, path: &ColumnPolyline, cal: &Calibration) -> f64 {
    let (sx, sy) = (cal.mm_per_px_x, cal.mm_per_px_y);
    let (px, py) = (p.x * sx, p.y * sy);
    let mut pts = path.points().map(|q| (q.x * sx, q.y * sy));
    let Some(mut a) = pts.next() else {
        return f64::INFINITY;
    };
    let mut best = (px - a.0).hypot(py - a.1);
    for b in pts {
        let (ex, ey) = (b.0 - a.0, b.1 - a.1);
        let len2 = ex * ex + ey * ey;
        let t = if len2 > 0.0 {
            (((px - a.0) * ex + (py - a.1) * ey) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d = (px - (a.0 + t * ex)).hypot(py - (a.1 + t * ey));
        best = best.min(d);
        a = b;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point2> {
        v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    #[test]
    fn fit_exact_lines() {
        let l = fit_line_least_squares(&pts(&[(0., 0.), (1., 1.), (2., 2.)])).unwrap();
        assert_abs_diff_eq!(l.slope, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.intercept, 0.0, epsilon = 1e-12);
        let l = fit_line_least_squares(&pts(&[(0., 1.), (1., 3.), (2., 5.)])).unwrap();
        assert_abs_diff_eq!(l.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.intercept, 1.0, epsilon = 1e-12);
        assert_eq!((l.x_min, l.x_max), (0.0, 2.0));
    }

    #[test]
    fn fit_normal_equations_by_hand() {
        // Sx=3 Sy=4 Sxx=5 Sxy=6, n=3: slope=(18-12)/(15-9)=1, b=(4-3)/3
        let l = fit_line_least_squares(&pts(&[(0., 0.), (1., 2.), (2., 2.)])).unwrap();
        assert_abs_diff_eq!(l.slope, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.intercept, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert_eq!(
            fit_line_least_squares(&pts(&[(1., 0.)])),
            Err(GeometryError::DegenerateFit)
        );
        assert_eq!(
            fit_line_least_squares(&pts(&[(3., 0.), (3., 5.), (3., 9.)])),
            Err(GeometryError::DegenerateFit)
        );
    }

    fn line(slope: f64, intercept: f64) -> FittedLine {
        FittedLine {
            slope,
            intercept,
            x_min: 0.0,
            x_max: 500.0,
        }
    }

    #[test]
    fn intersection_with_flat_polyline() {
        let apo = ColumnPolyline::new(0, vec![100.0; 501]).unwrap();
        let p = line_polyline_intersection(&line(-1.0, 300.0), &apo).unwrap();
        assert_abs_diff_eq!(p.x, 200.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 100.0, epsilon = 1e-9);
        assert!(line_polyline_intersection(&line(0.0, 90.0), &apo).is_none());
    }

    #[test]
    fn intersection_with_rising_polyline() {
        let apo = ColumnPolyline::new(0, (0..400).map(|c| 100.0 + 0.5 * c as f64).collect()).unwrap();
        let p = line_polyline_intersection(&line(-0.5, 200.0), &apo).unwrap();
        assert_abs_diff_eq!(p.x, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 150.0, epsilon = 1e-9);
    }

    #[test]
    fn intersection_between_columns() {
        let apo = ColumnPolyline::new(10, vec![100.0; 20]).unwrap();
        let p = line_polyline_intersection(&line(2.0, 73.0), &apo).unwrap();
        assert_abs_diff_eq!(p.x, 13.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 100.0, epsilon = 1e-12);
    }

    #[test]
    fn local_slope_examples() {
        let flat = ColumnPolyline::new(5, vec![300.0; 200]).unwrap();
        assert_abs_diff_eq!(local_slope(&flat, 50, 50).unwrap(), 0.0, epsilon = 1e-12);

        let ramp = ColumnPolyline::new(5, (0..200).map(|i| 300.0 + 0.2 * i as f64).collect()).unwrap();
        assert_abs_diff_eq!(local_slope(&ramp, 60, 50).unwrap(), 0.2, epsilon = 1e-12);
        // at the right end only the backward window is available
        assert_abs_diff_eq!(local_slope(&ramp, ramp.x_end(), 50).unwrap(), 0.2, epsilon = 1e-12);

        let saw = ColumnPolyline::new(0, (0..300).map(|i| if i % 2 == 0 { 300.0 } else { 302.0 }).collect())
            .unwrap();
        assert!(local_slope(&saw, 100, 50).unwrap().abs() <= 0.05);
    }

    #[test]
    fn local_slope_errors() {
        let single = ColumnPolyline::new(3, vec![1.0]).unwrap();
        assert_eq!(local_slope(&single, 3, 50), Err(GeometryError::DegenerateFit));
        assert_eq!(local_slope(&single, 9, 50), Err(GeometryError::OutOfExtent(9)));
    }

    #[test]
    fn angle_examples() {
        assert_abs_diff_eq!(angle_between(-1.0, 0.0), 45.0, epsilon = 1e-12);
        assert_abs_diff_eq!(angle_between(0.3, 0.3), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(angle_between(-0.5, 0.1), 32.2756, epsilon = 1e-3);
        // lines at 170 degrees apart form a 10 degree angle
        let a = 85f64.to_radians().tan();
        let b = (-85f64).to_radians().tan();
        assert_abs_diff_eq!(angle_between(a, b), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn calibrated_distance_examples() {
        let iso = Calibration::isotropic(0.1).unwrap();
        let o = Point2::new(0.0, 0.0);
        assert_abs_diff_eq!(calibrated_distance(o, Point2::new(300.0, 0.0), &iso), 30.0, epsilon = 1e-9);
        let unit = Calibration::isotropic(1.0).unwrap();
        assert_abs_diff_eq!(calibrated_distance(o, Point2::new(3.0, 4.0), &unit), 5.0, epsilon = 1e-12);
        let aniso = Calibration::new(0.1, 0.2).unwrap();
        assert_abs_diff_eq!(
            calibrated_distance(o, Point2::new(100.0, 100.0), &aniso),
            22.360_679_775,
            epsilon = 1e-6
        );
    }

    #[test]
    fn calibration_validation() {
        assert!(Calibration::new(0.0, 0.1).is_err());
        assert!(Calibration::new(0.1, -1.0).is_err());
        assert!(Calibration::isotropic(f64::NAN).is_err());
    }

    #[test]
    fn extrapolation_continues_flank_slope() {
        // deep bar spanning x in [100, 400], slope 0.2
        let ys: Vec<f64> = (100..=400).map(|x| 300.0 + 0.2 * (x - 100) as f64).collect();
        let apo = ColumnPolyline::new(100, ys).unwrap();
        let (ext, left, right) = apo.extrapolated(512, 50);
        assert_eq!((ext.x_start(), ext.x_end(), left, right), (0, 511, 100, 111));
        assert_abs_diff_eq!(ext.y_at_column(0).unwrap(), 280.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ext.y_at_column(511).unwrap(), 300.0 + 0.2 * 411.0, epsilon = 1e-9);
        for c in 0..511 {
            let d = ext.y_at_column(c + 1).unwrap() - ext.y_at_column(c).unwrap();
            assert_abs_diff_eq!(d, 0.2, epsilon = 1e-9);
        }
    }

    #[test]
    fn point_to_polyline_matches_vertical_gap_on_flat_path() {
        let deep = ColumnPolyline::new(0, vec![400.0; 512]).unwrap();
        let cal = Calibration::new(0.1, 0.2).unwrap();
        assert_abs_diff_eq!(
            point_to_polyline_distance(Point2::new(256.0, 100.0), &deep, &cal),
            60.0,
            epsilon = 1e-9
        );
    }

    proptest! {
        #[test]
        fn fit_recovers_exact_line(slope in -5.0f64..5.0, intercept in -500.0f64..500.0, n in 2usize..60, x0 in 0.0f64..400.0) {
            let points: Vec<Point2> = (0..n).map(|i| {
                let x = x0 + 1.5 * i as f64;
                Point2::new(x, slope * x + intercept)
            }).collect();
            let l = fit_line_least_squares(&points).unwrap();
            prop_assert!((l.slope - slope).abs() <= 1e-9 * slope.abs().max(1.0));
            prop_assert!((l.intercept - intercept).abs() <= 1e-9 * intercept.abs().max(1.0) * 1e2);
        }

        #[test]
        fn fit_is_residual_optimal(ys in proptest::collection::vec(-100.0f64..100.0, 3..30)) {
            let points: Vec<Point2> = ys.iter().enumerate().map(|(i, &y)| Point2::new(i as f64, y)).collect();
            let l = fit_line_least_squares(&points).unwrap();
            let sse = |m: f64, b: f64| points.iter().map(|p| (p.y - m * p.x - b).powi(2)).sum::<f64>();
            let best = sse(l.slope, l.intercept);
            for (dm, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
                prop_assert!(sse(l.slope + dm, l.intercept + db) >= best - 1e-9 * best.max(1.0));
            }
        }

        #[test]
        fn angle_is_symmetric(a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let ab = angle_between(a, b);
            prop_assert_eq!(ab, angle_between(b, a));
            prop_assert!((0.0..=90.0).contains(&ab));
            prop_assert_eq!(ab == 0.0, a == b);
        }

        #[test]
        fn intersection_lies_on_both(slope in -3.0f64..3.0, intercept in 0.0f64..600.0,
                                    ys in proptest::collection::vec(50.0f64..450.0, 2..80)) {
            let apo = ColumnPolyline::new(7, ys).unwrap();
            let l = FittedLine { slope, intercept, x_min: 0.0, x_max: 100.0 };
            if let Some(p) = line_polyline_intersection(&l, &apo) {
                let apo_y = apo.y_at(p.x).unwrap();
                prop_assert!((l.y_at(p.x) - apo_y).abs() < 1e-6);
            }
        }

        #[test]
        fn distance_is_a_metric(ax in 0.0f64..1000.0, ay in 0.0f64..1000.0, bx in 0.0f64..1000.0, by in 0.0f64..1000.0,
                                sx in 0.01f64..1.0, sy in 0.01f64..1.0) {
            let cal = Calibration::new(sx, sy).unwrap();
            let (a, b) = (Point2::new(ax, ay), Point2::new(bx, by));
            let d = calibrated_distance(a, b, &cal);
            prop_assert_eq!(d, calibrated_distance(b, a, &cal));
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d == 0.0, a == b);
        }
    }
}
