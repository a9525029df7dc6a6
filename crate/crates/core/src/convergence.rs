//! Empirical convergence-rate estimation.
//!
//! Fits `log(d_k) = log(c) + k log(rate)` by least squares over the tail of a
//! distance sequence and reports the per-iteration geometric factor together
//! with the R^2 of the fit.

use thiserror::Error;

/// Distances closer than `1e3 * eps * initial` to zero have hit the float
/// floor and are excluded from the fit.
const FLOAT_FLOOR_FACTOR: f64 = 1e3 * f64::EPSILON;
/// Minimum number of usable tail points.
const MIN_POINTS: usize = 20;

#[derive(Debug, Error)]
pub enum RateFitError {
    #[error("need at least {MIN_POINTS} positive tail points above the float floor, got {got}")]
    InsufficientData { got: usize },
    #[error("tail fraction must lie in (0, 1], got {0}")]
    BadTailFraction(f64),
}

/// A fitted geometric decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Per-iteration factor `exp(slope)`; below one for converging runs.
    pub rate: f64,
    /// Goodness of the log-linear fit in [0, 1].
    pub r_squared: f64,
    /// Tail fraction that was used.
    pub window: f64,
}

/// Fits the tail of `(iteration, distance)` pairs.
pub fn fit_rate(distances: &[(usize, f64)], tail_fraction: f64) -> Result<RateFit, RateFitError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(RateFitError::BadTailFraction(tail_fraction));
    }
    let initial = distances.first().map(|&(_, d)| d).unwrap_or(0.0);
    let floor = FLOAT_FLOOR_FACTOR * initial;
    let tail_len = ((distances.len() as f64) * tail_fraction).ceil() as usize;
    let start = distances.len().saturating_sub(tail_len);
    let tail: Vec<(f64, f64)> = distances[start..]
        .iter()
        .filter(|&&(_, d)| d > floor && d > 0.0)
        .map(|&(k, d)| (k as f64, d.ln()))
        .collect();
    if tail.len() < MIN_POINTS {
        return Err(RateFitError::InsufficientData { got: tail.len() });
    }
    let n = tail.len() as f64;
    let mean_k = tail.iter().map(|&(k, _)| k).sum::<f64>() / n;
    let mean_y = tail.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let mut skk = 0.0;
    let mut sky = 0.0;
    for &(k, y) in &tail {
        skk += (k - mean_k) * (k - mean_k);
        sky += (k - mean_k) * (y - mean_y);
    }
    let slope = sky / skk;
    let intercept = mean_y - slope * mean_k;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(k, y) in &tail {
        let pred = intercept + slope * k;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        // A perfectly flat tail is a perfect fit of a constant.
        1.0
    };
    Ok(RateFit {
        rate: slope.exp(),
        r_squared,
        window: tail_fraction,
    })
}
