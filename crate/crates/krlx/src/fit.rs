//! Least-squares line fits on logarithmic data.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fitted quantity.
    pub residual: f64,
    /// Standard error of the slope.
    pub slope_err: f64,
    pub points: usize,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| (*a, *b)).collect();
    let n = pts.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("{n} usable points")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("abscissae coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let residual = (ss / nf).sqrt();
    let slope_err = if n > 2 { (ss / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LineFit { slope, intercept, residual, slope_err, points: n })
}

/// Slope of `ln y` against `ln t`; nonpositive samples are dropped.
pub fn loglog_slope(t: &[f64], y: &[f64]) -> Result<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        t.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).unzip();
    line_fit(&lx, &ly)
}

/// Exponential rate `λ` in `y ≈ C e^{-λ t}` over `t ∈ [t0, t1]`
/// (the returned slope is `-λ`).
pub fn exp_rate(t: &[f64], y: &[f64], t0: f64, t1: f64) -> Result<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(a, b)| **a >= t0 - 1e-12 && **a <= t1 + 1e-12 && **b > 0.0)
        .map(|(a, b)| (*a, b.ln()))
        .unzip();
    line_fit(&lx, &ly)
}
