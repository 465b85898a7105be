use serde::Serialize;

use crate::error::{Error, Result};

/// Least-squares line `log10 value = -eta * N + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub eta: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log10 units.
    pub rms: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub points: usize,
}

/// Ordinary least squares of `log10 value` against `N`; `eta` is minus the slope.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::Fit(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(n, y)| !n.is_finite() || !y.is_finite()) {
        return Err(Error::Fit("non-finite data point".into()));
    }
    let count = points.len() as f64;
    let mean_n = points.iter().map(|p| p.0).sum::<f64>() / count;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / count;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_n).powi(2)).sum();
    if sxx <= f64::EPSILON * mean_n.abs().max(1.0) {
        return Err(Error::Fit("degenerate design: all N equal".into()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_n) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_n;
    let rms = (points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum::<f64>()
        / count)
        .sqrt();
    let (n_min, n_max) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
    Ok(FitResult {
        eta: -slope,
        intercept,
        rms,
        n_min,
        n_max,
        points: points.len(),
    })
}

/// `-eta * N + intercept`.
pub fn extrapolate(fit: &FitResult, n: f64) -> f64 {
    -fit.eta * n + fit.intercept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<_> = (1..=10)
            .map(|k| (4.0 * k as f64, -0.01 * 4.0 * k as f64))
            .collect();
        let fit = fit_exponent(&pts).unwrap();
        assert!((fit.eta - 0.01).abs() < 1e-15);
        assert!(fit.intercept.abs() < 1e-14);
        assert!(fit.rms < 1e-15);
        assert_eq!((fit.n_min, fit.n_max, fit.points), (4.0, 40.0, 10));
    }

    #[test]
    fn noisy_line_matches_closed_form() {
        // slope and intercept of (0,1),(1,3),(2,2),(3,5): both 1.1
        let fit = fit_exponent(&[(0.0, 1.0), (1.0, 3.0), (2.0, 2.0), (3.0, 5.0)]).unwrap();
        assert!((fit.eta + 1.1).abs() < 1e-14);
        assert!((fit.intercept - 1.1).abs() < 1e-14);
        let resid = [1.0 - 1.1, 3.0 - 2.2, 2.0 - 3.3, 5.0 - 4.4];
        let rms = (resid.iter().map(|r| r * r).sum::<f64>() / 4.0).sqrt();
        assert!((fit.rms - rms).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(fit_exponent(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]).is_err());
        assert!(fit_exponent(&[(5.0, 0.0), (5.0, 1.0), (5.0, 2.0), (5.0, 3.0)]).is_err());
        assert!(fit_exponent(&[(1.0, 0.0), (2.0, f64::NAN), (3.0, 0.0), (4.0, 0.0)]).is_err());
    }

    #[test]
    fn extrapolation() {
        let zero = FitResult {
            eta: 0.0,
            intercept: 0.0,
            rms: 0.0,
            n_min: 0.0,
            n_max: 1.0,
            points: 4,
        };
        assert_eq!(extrapolate(&zero, 1e6), 0.0);
        let fit = FitResult {
            eta: 0.09263,
            intercept: 0.0,
            ..zero
        };
        assert!((extrapolate(&fit, 1e5) + 9263.0).abs() < 1e-9);
        assert!((extrapolate(&fit, 1e6) + 92630.0).abs() < 1e-8);
    }
}
