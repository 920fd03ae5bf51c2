//! Least-squares line fits shared by every slope and order check.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
    /// 95% confidence interval for the slope (Student t).
    pub ci_low: f64,
    pub ci_high: f64,
    /// Root-mean-square residual of the fit.
    pub rms_residual: f64,
    pub points: usize,
}

fn t975(dof: usize) -> f64 {
    const T: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080,
        2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    if dof == 0 {
        f64::INFINITY
    } else if dof <= 30 {
        T[dof - 1]
    } else {
        1.96
    }
}

/// Ordinary least squares `y ≈ intercept + slope·x`. `None` with fewer than
/// two distinct abscissae or non-finite data.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len().min(y.len());
    if n < 2 || x.iter().chain(y).any(|v| !v.is_finite()) {
        return None;
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = x[..n].iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = n.saturating_sub(2);
    let slope_stderr = if dof > 0 { (sse / dof as f64 / sxx).sqrt() } else { 0.0 };
    let half = t975(dof) * slope_stderr;
    let half = if half.is_finite() { half } else { 0.0 };
    Some(LineFit { slope, intercept, slope_stderr, ci_low: slope - half, ci_high: slope + half, rms_residual: (sse / nf).sqrt(), points: n })
}

/// Slope of `log|values|` against `log(x)`. `None` if any value is zero.
pub fn loglog(x: &[f64], values: &[f64]) -> Option<LineFit> {
    if values.contains(&0.0) || x.iter().any(|v| *v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    least_squares(&lx, &ly)
}
