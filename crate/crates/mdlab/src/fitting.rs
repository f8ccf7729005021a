//! Log-log slope fits and Richardson extrapolation.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("rate fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("rate fit needs positive abscissas and values")]
    NonPositiveData,
    #[error("inconclusive fit: R^2 = {r_squared} < 0.95")]
    Inconclusive { r_squared: f64 },
}

/// Least-squares fit of log(err) against log(h).
#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    /// (h, value) points.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// false when R^2 < 0.95 (verdict: inconclusive).
    pub conclusive: bool,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if points.iter().any(|(h, e)| *h <= 0.0 || *e <= 0.0) {
        return Err(FitError::NonPositiveData);
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(h, e)| (h.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = logs.iter().map(|(_, y)| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 =
        logs.iter().map(|(x, y)| (y - slope * x - intercept) * (y - slope * x - intercept)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit {
        points: points.to_vec(),
        slope,
        intercept,
        r_squared,
        conclusive: r_squared >= 0.95,
    })
}

/// Same as `fit_rate` but errors out on an inconclusive fit.
pub fn fit_rate_strict(points: &[(f64, f64)]) -> Result<RateFit, FitError> {
    let fit = fit_rate(points)?;
    if !fit.conclusive {
        return Err(FitError::Inconclusive { r_squared: fit.r_squared });
    }
    Ok(fit)
}

/// Richardson extrapolation with a known leading exponent p: from the two
/// finest levels of `(h, value)` (any order), with ratio r = h_coarse/h_fine,
/// returns (r^p v_fine - v_coarse) / (r^p - 1).
pub fn richardson(points: &[(f64, f64)], order: f64) -> f64 {
    assert!(points.len() >= 2, "richardson needs at least two levels");
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (h_fine, v_fine) = sorted[0];
    let (h_coarse, v_coarse) = sorted[1];
    let rp = (h_coarse / h_fine).powf(order);
    (rp * v_fine - v_coarse) / (rp - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn richardson_recovers_constant() {
        // a + b h^2 at three h values recovers a to 1e-10
        let a = 0.7312;
        let b = 2.41;
        let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&h| (h, a + b * h * h)).collect();
        let extrap = richardson(&pts, 2.0);
        assert!((extrap - a).abs() <= 1e-10, "extrapolated {extrap}");
    }

    #[test]
    fn fit_recovers_exact_slope() {
        let pts: Vec<(f64, f64)> =
            [0.2, 0.1, 0.05, 0.025].iter().map(|&h| (h, 3.0 * h * h)).collect();
        let fit = fit_rate_strict(&pts).unwrap();
        assert_relative_eq!(fit.slope, 2.0, max_relative = 1e-12);
        assert!(fit.r_squared > 0.999999);
    }

    #[test]
    fn fit_guards() {
        assert_eq!(fit_rate(&[(0.1, 1.0), (0.05, 0.5)]).unwrap_err(), FitError::TooFewPoints(2));
        assert_eq!(
            fit_rate(&[(0.1, 1.0), (0.05, 0.0), (0.025, 0.2)]).unwrap_err(),
            FitError::NonPositiveData
        );
        // noisy, trendless data is inconclusive
        let noisy = [(0.2, 1.0), (0.1, 3.0), (0.05, 0.8), (0.025, 2.5)];
        assert!(matches!(fit_rate_strict(&noisy), Err(FitError::Inconclusive { .. })));
    }
}
