//! Hurst exponent estimation from the q-th order structure function:
//! m_q(lag) = mean_t |x_{t+lag} - x_t|^q grows like lag^{qH}, so the slope of
//! log m_q against log lag divided by q estimates H.

use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum HurstError {
    #[error("series of {len} points is too short for max lag {max_lag} (need >= {needed})")]
    SeriesTooShort {
        len: usize,
        max_lag: usize,
        needed: usize,
    },
    #[error("need at least two distinct lags")]
    TooFewLags,
    #[error("moment order q must be positive, got {0}")]
    BadMomentOrder(f64),
    #[error("degenerate regression: series is constant at the requested lags")]
    DegenerateSeries,
}

#[derive(Debug, Clone)]
pub struct HurstEstimate {
    pub h_hat: f64,
    pub stderr: f64,
    pub lags: Vec<usize>,
    pub r_squared: f64,
}

pub const DEFAULT_LAGS: std::ops::RangeInclusive<usize> = 1..=20;

/// Estimate the Hurst exponent of a real series.
///
/// The series must be at least ten times the largest lag. Callers typically
/// pass log spot-variance; the estimate is invariant to scaling of the series.
pub fn estimate_hurst(series: &[f64], q: f64, lags: &[usize]) -> Result<HurstEstimate, HurstError> {
    if !(q > 0.0) {
        return Err(HurstError::BadMomentOrder(q));
    }
    let mut lags: Vec<usize> = lags.iter().copied().filter(|&l| l > 0).collect();
    lags.sort_unstable();
    lags.dedup();
    if lags.len() < 2 {
        return Err(HurstError::TooFewLags);
    }
    let max_lag = *lags.last().unwrap();
    let needed = 10 * max_lag;
    if series.len() < needed {
        return Err(HurstError::SeriesTooShort {
            len: series.len(),
            max_lag,
            needed,
        });
    }
    let mut log_lag = Vec::with_capacity(lags.len());
    let mut log_moment = Vec::with_capacity(lags.len());
    for &lag in &lags {
        let mut acc = 0.0;
        let count = series.len() - lag;
        for t in 0..count {
            acc += (series[t + lag] - series[t]).abs().powf(q);
        }
        let m = acc / count as f64;
        if m <= 0.0 {
            return Err(HurstError::DegenerateSeries);
        }
        log_lag.push((lag as f64).ln());
        log_moment.push(m.ln());
    }
    let fit = stats::ols_fit(&log_lag, &log_moment).ok_or(HurstError::DegenerateSeries)?;
    Ok(HurstEstimate {
        h_hat: fit.slope / q,
        stderr: fit.slope_stderr / q,
        lags,
        r_squared: fit.r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn brownian_series(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = CounterRng::new(seed);
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = x[t - 1] + rng.next_normal();
        }
        x
    }

    #[test]
    fn brownian_path_estimates_one_half() {
        let series = brownian_series(10_000, 21);
        let lags: Vec<usize> = DEFAULT_LAGS.collect();
        let est = estimate_hurst(&series, 2.0, &lags).unwrap();
        assert!(
            (est.h_hat - 0.5).abs() < 0.05,
            "H_hat = {} (r2 = {})",
            est.h_hat,
            est.r_squared
        );
        assert!(est.r_squared > 0.99);
    }

    #[test]
    fn scale_invariance_is_exact() {
        let series = brownian_series(3_000, 5);
        let scaled: Vec<f64> = series.iter().map(|x| -217.3 * x).collect();
        let lags = [1usize, 2, 4, 8, 16];
        let a = estimate_hurst(&series, 2.0, &lags).unwrap();
        let b = estimate_hurst(&scaled, 2.0, &lags).unwrap();
        assert_eq!(a.h_hat, b.h_hat);
        assert_eq!(a.r_squared, b.r_squared);
    }

    #[test]
    fn error_paths() {
        let lags: Vec<usize> = DEFAULT_LAGS.collect();
        assert!(matches!(
            estimate_hurst(&[1.0; 50], 2.0, &lags),
            Err(HurstError::SeriesTooShort { .. })
        ));
        let flat = vec![3.5; 500];
        assert!(matches!(
            estimate_hurst(&flat, 2.0, &[1, 2, 4]),
            Err(HurstError::DegenerateSeries)
        ));
        let series = brownian_series(500, 1);
        assert!(matches!(
            estimate_hurst(&series, 2.0, &[3]),
            Err(HurstError::TooFewLags)
        ));
        assert!(matches!(
            estimate_hurst(&series, 0.0, &[1, 2]),
            Err(HurstError::BadMomentOrder(_))
        ));
    }
}
