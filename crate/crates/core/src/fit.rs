//! Least-squares convergence-order fits on log-log data.

use serde::{Deserialize, Serialize};

/// Errors at or below this floor are treated as exact.
pub const DEGENERATE_FLOOR: f64 = 1e-14;

/// Fit of `ln(error) = slope * ln(n) + intercept`.
///
/// When every error is at roundoff level, or fewer than two usable points
/// exist, the fit is flagged degenerate and carries no slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Root-mean-square residual of the fit in log space.
    pub residual: Option<f64>,
    pub points: usize,
    pub degenerate: bool,
}

impl ConvergenceFit {
    fn degenerate(points: usize) -> Self {
        ConvergenceFit { slope: None, intercept: None, residual: None, points, degenerate: true }
    }
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> ConvergenceFit {
    assert_eq!(x.len(), y.len());
    let points = x.len();
    if points < 2 || y.iter().any(|&e| e.is_nan() || e <= DEGENERATE_FLOOR) || x.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return ConvergenceFit::degenerate(points);
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = points as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return ConvergenceFit::degenerate(points);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - (slope * a + intercept)).powi(2)).sum();
    ConvergenceFit {
        slope: Some(slope),
        intercept: Some(intercept),
        residual: Some((ss / m).sqrt()),
        points,
        degenerate: false,
    }
}
