//! Weighted log-log power-law fits.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-positive value {value} at size {size}")]
    DegenerateInput { size: f64, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Slope of log(value) against log(size).
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Weighted least squares of log(value) on log(size). Point `i` gets weight
/// 1/σ_i² with σ_i = se_i / value_i (delta method); if every standard error is
/// zero the fit is unweighted.
pub fn fit_power_law(points: &[(f64, f64, f64)]) -> Result<PowerLawFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    for &(size, value, _) in points {
        if !(value > 0.0) || !(size > 0.0) {
            return Err(FitError::DegenerateInput { size, value });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let sig: Vec<f64> = points.iter().map(|p| p.2 / p.1).collect();
    let weighted = sig.iter().all(|&s| s > 0.0);
    let ws: Vec<f64> = if weighted { sig.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; points.len()] };
    let sw: f64 = ws.iter().sum();
    let mx = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * (x - mx) * (x - mx)).sum();
    let sxy: f64 = ws.iter().zip(xs.iter().zip(&ys)).map(|(w, (x, y))| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = ws.iter().zip(xs.iter().zip(&ys)).map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ws.iter().zip(&ys).map(|(w, y)| w * (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let dof = (points.len() - 2) as f64;
    // Known errors: 1/Sxx. Unweighted: residual variance estimate.
    let stderr = if weighted { (1.0 / sxx).sqrt() } else { (ss_res / dof / sxx).sqrt() };
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(PowerLawFit { exponent: slope, stderr, intercept, r_squared, window: (lo, hi) })
}

/// Fit, then refit without the smallest size if r² < `min_r2`.
pub fn fit_with_window(points: &[(f64, f64, f64)], min_r2: f64) -> Result<PowerLawFit, FitError> {
    let fit = fit_power_law(points)?;
    if fit.r_squared >= min_r2 || points.len() <= 3 {
        return Ok(fit);
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    fit_power_law(&sorted[1..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_half_power() {
        let f = fit_power_law(&[(1.0, 1.0, 0.0), (2.0, 2f64.powf(-0.5), 0.0), (4.0, 0.5, 0.0)]).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat() {
        let f = fit_power_law(&[(1.0, 1.0, 0.1), (2.0, 1.0, 0.1), (4.0, 1.0, 0.1)]).unwrap();
        assert_eq!(f.exponent, 0.0);
    }

    #[test]
    fn noiseless_eighth() {
        let pts: Vec<_> = [8.0, 16.0, 32.0, 64.0, 128.0].iter().map(|&n: &f64| (n, n.powf(-0.125), 0.01 * n.powf(-0.125))).collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.exponent + 0.125).abs() < 1e-12);
        assert_eq!(f.window, (8.0, 128.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit_power_law(&[(1.0, 1.0, 0.1), (2.0, 0.0, 0.1), (3.0, 1.0, 0.1)]), Err(FitError::DegenerateInput { .. })));
        assert!(matches!(fit_power_law(&[(1.0, 1.0, 0.1)]), Err(FitError::TooFewPoints(1))));
    }

    #[test]
    fn weighted_stderr_scales_with_errors() {
        let pts: Vec<_> = [8.0, 16.0, 32.0].iter().map(|&n: &f64| (n, n.powf(-0.5), 0.02 * n.powf(-0.5))).collect();
        let half: Vec<_> = pts.iter().map(|&(n, v, s)| (n, v, s / 2f64.sqrt())).collect();
        let (a, b) = (fit_power_law(&pts).unwrap(), fit_power_law(&half).unwrap());
        assert!((b.stderr / a.stderr - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }
}
