//! Kaplan–Yorke dimension, windowed robust statistics and the fits of
//! exponents and dimension against domain length.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sweep::SpectrumRecord;

/// Runs whose leading exponent is below this are flagged non-chaotic.
pub const NONCHAOTIC_THRESHOLD: f64 = 0.005;

/// Default window half-width over domain length.
pub const DEFAULT_HALFWIDTH: f64 = 1.0;

/// Domain length from which dimension grows linearly.
pub const DEFAULT_DKY_L_MIN: f64 = 80.0;

/// Offset, amplitude and index shift of `λ_i(L) ≈ A − B·(i − i0)/L`.
pub const EXPONENT_OFFSET: f64 = 0.093;
pub const EXPONENT_SLOPE: f64 = 0.94;
pub const EXPONENT_INDEX_SHIFT: f64 = 0.39;

/// Tolerance for membership of a grid point in a window, absorbing the
/// rounding of `L_start + k·dL`.
const WINDOW_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KaplanYorkeResult {
    /// Largest index whose partial sum is nonnegative.
    pub j: usize,
    pub dimension: f64,
    pub partial_sums: Vec<f64>,
    /// The partial sums never turned negative, so `dimension` is only the
    /// lower bound `j`.
    pub unsaturated: bool,
}

/// `D = j + (λ_1 + … + λ_j) / |λ_{j+1}|`, `j` the largest index with a
/// nonnegative partial sum.
pub fn kaplan_yorke(exponents: &[f64]) -> Result<KaplanYorkeResult> {
    if exponents.is_empty() {
        return Err(Error::InsufficientData("no exponents supplied".into()));
    }
    if exponents.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig("exponents must be finite".into()));
    }
    if exponents.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidConfig("exponents must be non-increasing".into()));
    }
    let partial_sums: Vec<f64> = exponents
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let j = partial_sums
        .iter()
        .rposition(|&s| s >= 0.0)
        .map_or(0, |idx| idx + 1);
    if j == 0 {
        return Ok(KaplanYorkeResult {
            j,
            dimension: 0.0,
            partial_sums,
            unsaturated: false,
        });
    }
    if j == exponents.len() {
        return Ok(KaplanYorkeResult {
            j,
            dimension: j as f64,
            partial_sums,
            unsaturated: true,
        });
    }
    let next = exponents[j];
    if next == 0.0 {
        return Err(Error::DegenerateDivisor { index: j + 1 });
    }
    Ok(KaplanYorkeResult {
        j,
        dimension: j as f64 + partial_sums[j - 1] / next.abs(),
        partial_sums,
        unsaturated: false,
    })
}

pub fn is_nonchaotic(exponents: &[f64]) -> bool {
    exponents.first().is_some_and(|&l1| l1 < NONCHAOTIC_THRESHOLD)
}

/// Median; the mean of the middle pair for even lengths. `None` if empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    })
}

/// Mean absolute deviation about the median.
pub fn mean_absolute_deviation(values: &[f64]) -> Option<f64> {
    let med = median(values)?;
    Some(values.iter().map(|v| (v - med).abs()).sum::<f64>() / values.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowedStat {
    pub center: f64,
    /// One-based exponent index.
    pub index: usize,
    pub median: f64,
    pub mad: f64,
    pub count: usize,
}

/// Median and mean absolute deviation of `λ_index` over the records with
/// `|L − center| ≤ halfwidth`. Failed runs and missing exponents are skipped.
pub fn windowed_median_mad(
    records: &[SpectrumRecord],
    center: f64,
    halfwidth: f64,
    index: usize,
) -> Result<WindowedStat> {
    if index == 0 {
        return Err(Error::InvalidConfig("exponent indices start at 1".into()));
    }
    let values: Vec<f64> = records
        .iter()
        .filter(|r| !r.flags.failed && (r.length - center).abs() <= halfwidth + WINDOW_SLACK)
        .filter_map(|r| r.exponents.get(index - 1).copied())
        .filter(|v| v.is_finite())
        .collect();
    let (Some(median), Some(mad)) = (median(&values), mean_absolute_deviation(&values)) else {
        return Err(Error::EmptyWindow { center, halfwidth });
    };
    Ok(WindowedStat {
        center,
        index,
        median,
        mad,
        count: values.len(),
    })
}

/// Windowed statistics for every exponent index at each centre. Indices with
/// no data in a window are skipped.
pub fn windowed_table(
    records: &[SpectrumRecord],
    centers: &[f64],
    halfwidth: f64,
) -> Result<Vec<WindowedStat>> {
    let m = records.iter().map(|r| r.exponents.len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for &c in centers {
        let mut any = false;
        for i in 1..=m {
            match windowed_median_mad(records, c, halfwidth, i) {
                Ok(stat) => {
                    any = true;
                    out.push(stat);
                }
                Err(Error::EmptyWindow { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if !any {
            return Err(Error::EmptyWindow { center: c, halfwidth });
        }
    }
    Ok(out)
}

/// Least-squares solution of `A x ≈ y` via Householder QR of `A`.
fn least_squares(a: DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let cols = a.ncols();
    if a.nrows() < cols {
        return Err(Error::SingularNormalEquations);
    }
    let qr = a.qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let scale = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::SingularNormalEquations);
    }
    let mut x = DVector::zeros(cols);
    for i in (0..cols).rev() {
        let rii = r[(i, i)];
        if rii.abs() <= 1e-12 * scale {
            return Err(Error::SingularNormalEquations);
        }
        let mut acc = qty[i];
        for j in i + 1..cols {
            acc -= r[(i, j)] * x[j];
        }
        x[i] = acc / rii;
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p: f64,
    pub rms_residual: f64,
    /// Mean absolute deviation of the residuals about their median.
    pub mad_residual: f64,
    pub n_points: usize,
}

impl PowerLawFit {
    /// `a + (b + c·i)/L^p`
    pub fn predict(&self, index: f64, length: f64) -> f64 {
        self.a + (self.b + self.c * index) / length.powf(self.p)
    }

    /// The fit rewritten as `A − B·(i − i0)/L^p`, returned as `(A, B, i0)`.
    pub fn shifted_form(&self) -> (f64, f64, f64) {
        (self.a, -self.c, -self.b / self.c)
    }
}

/// Fits `λ_i(L) ≈ a + (b + c·i)/L^p` to the positive windowed medians.
pub fn fit_power_law(stats: &[WindowedStat], p: f64) -> Result<PowerLawFit> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidConfig(format!("p must be positive, got {p}")));
    }
    let used: Vec<&WindowedStat> = stats
        .iter()
        .filter(|s| s.median > 0.0 && s.median.is_finite())
        .collect();
    let distinct = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    let n_l = distinct(used.iter().map(|s| s.center).collect());
    let n_i = distinct(used.iter().map(|s| s.index as f64).collect());
    if n_l < 3 || n_i < 3 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs at least 3 domain lengths and 3 indices with positive medians \
             (have {n_l} and {n_i})"
        )));
    }
    let rows = used.len();
    let design = DMatrix::from_fn(rows, 3, |r, col| {
        let s = used[r];
        let inv = s.center.powf(-p);
        match col {
            0 => 1.0,
            1 => inv,
            _ => s.index as f64 * inv,
        }
    });
    let y = DVector::from_iterator(rows, used.iter().map(|s| s.median));
    let x = least_squares(design, &y)?;
    let mut fit = PowerLawFit {
        a: x[0],
        b: x[1],
        c: x[2],
        p,
        rms_residual: 0.0,
        mad_residual: 0.0,
        n_points: rows,
    };
    let residuals: Vec<f64> = used
        .iter()
        .map(|s| s.median - fit.predict(s.index as f64, s.center))
        .collect();
    fit.rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / rows as f64).sqrt();
    fit.mad_residual = mean_absolute_deviation(&residuals).unwrap_or(0.0);
    Ok(fit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentScan {
    pub fits: Vec<PowerLawFit>,
    /// Grid value of `p` minimising the RMS residual.
    pub best_p: f64,
}

impl ExponentScan {
    pub fn best(&self) -> &PowerLawFit {
        self.fits
            .iter()
            .find(|f| f.p == self.best_p)
            .expect("best_p comes from the fits")
    }
}

/// `0.02, 0.04, …, 2.00`
pub fn default_p_grid() -> Vec<f64> {
    (1..=100).map(|k| k as f64 * 0.02).collect()
}

/// Fits the power law at every `p` in `p_grid` and locates the RMS minimum.
pub fn scan_exponent_p(stats: &[WindowedStat], p_grid: &[f64]) -> Result<ExponentScan> {
    if p_grid.is_empty() {
        return Err(Error::InvalidConfig("empty p grid".into()));
    }
    if p_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("p grid must be strictly ascending".into()));
    }
    let fits = p_grid
        .iter()
        .map(|&p| fit_power_law(stats, p))
        .collect::<Result<Vec<_>>>()?;
    let best_p = fits
        .iter()
        .min_by(|a, b| a.rms_residual.total_cmp(&b.rms_residual))
        .map(|f| f.p)
        .expect("grid is non-empty");
    Ok(ExponentScan { fits, best_p })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms: f64,
    pub n_points: usize,
}

/// Ordinary least squares of `D_KY` against `L` over usable records with
/// `L ≥ l_min`.
pub fn fit_dky_linear(records: &[SpectrumRecord], l_min: f64) -> Result<LinearFit> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| !r.flags.failed && r.dky.is_finite() && r.length >= l_min - WINDOW_SLACK)
        .map(|r| (r.length, r.dky))
        .collect();
    fit_line(&points)
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if n < 2 || xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "line fit needs two distinct abscissae, have {} points",
            n
        )));
    }
    let design = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { points[r].0 });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let x = least_squares(design, &y)?;
    let (intercept, slope) = (x[0], x[1]);
    let rms = (points
        .iter()
        .map(|(l, d)| (d - (intercept + slope * l)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(LinearFit {
        slope,
        intercept,
        rms,
        n_points: n,
    })
}

/// `λ_i(L) ≈ 0.093 − 0.94·(i − 0.39)/L`
pub fn predict_exponent(index: usize, length: f64) -> f64 {
    EXPONENT_OFFSET - EXPONENT_SLOPE * (index as f64 - EXPONENT_INDEX_SHIFT) / length
}

/// Index at which the partial sums of [`predict_exponent`] cross zero,
/// `j ≈ 0.2·L − 0.2`.
pub fn estimate_j_zero(length: f64) -> f64 {
    0.2 * length - 0.2
}
