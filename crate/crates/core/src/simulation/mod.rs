//! Correlated path batches for the supported model families.
//!
//! `simulate_rbergomi` is the workhorse (hybrid scheme with one exact
//! near-singularity term); `simulate_volterra_exact` samples the same joint law
//! from a dense covariance factorisation and serves as the distributional
//! oracle. Heston and Black–Scholes provide Markovian baselines, and
//! `simulate_ou_approx` is the finite Ornstein–Uhlenbeck mixture approximation
//! of fractional Brownian motion.
//!
//! Path generation is embarrassingly parallel over paths; every path owns a
//! counter-based substream keyed by `(seed, path index)`, so output is
//! bit-identical regardless of thread count.

pub mod cache;
mod exact;
mod heston;
mod hybrid;
pub mod kernel;
mod ou;
mod pathset;

pub use exact::simulate_volterra_exact;
pub use heston::simulate_heston;
pub use hybrid::simulate_rbergomi;
pub use ou::{simulate_ou_approx, OuApproxConfig};
pub use pathset::PathSet;

use crate::market::{MarketConfig, MarketError, ModelKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("need at least one path")]
    NoPaths,
    #[error("non-finite {field} value {value} on path {path}")]
    NonFinite {
        field: &'static str,
        path: usize,
        value: f64,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("grid of {n} steps exceeds the dense-factorisation limit {max}")]
    GridTooLarge { n: usize, max: usize },
    #[error("covariance factorisation failed: matrix not positive semidefinite at pivot {pivot}")]
    IndefiniteCovariance { pivot: usize },
    #[error("forward-variance dynamics undefined at t >= {t_fwd} (grid reaches {t})")]
    ForwardVarianceDomain { t: f64, t_fwd: f64 },
    #[error("OU quadrature: {0}")]
    OuQuadrature(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache format error: {0}")]
    CacheFormat(String),
}

/// Dispatch on the configured model family. Black–Scholes runs through the
/// rough Bergomi sampler with the vol-of-vol forced to zero, which collapses
/// the variance to the flat level exactly.
pub fn simulate(cfg: &MarketConfig, n_paths: usize) -> Result<PathSet, SimError> {
    match cfg.model {
        ModelKind::RoughBergomi => simulate_rbergomi(cfg, n_paths),
        ModelKind::Heston => simulate_heston(cfg, n_paths),
        ModelKind::BlackScholes => {
            let mut flat = *cfg;
            flat.nu = 0.0;
            flat.hurst = 0.5;
            simulate_rbergomi(&flat, n_paths)
        }
    }
}

/// Forward-variance values from auxiliary-process values on the trading grid.
///
/// `theta` holds the auxiliary process for the traded maturity on the grid
/// (theta[0] = 0). The variant is selected by `cfg.fv_scheme`: the exact
/// exponential applies the lognormal closed form; Euler–Maruyama recovers the
/// driving increments from the theta increments and steps the forward-variance
/// SDE directly.
pub fn forward_variance_path(theta: &[f64], cfg: &MarketConfig) -> Result<Vec<f64>, SimError> {
    cfg.validate()?;
    let grid = cfg.grid();
    if theta.len() != grid.len() {
        return Err(SimError::Shape(format!(
            "theta has {} values for a grid of {}",
            theta.len(),
            grid.len()
        )));
    }
    let t_last = grid[grid.len() - 1];
    if t_last >= cfg.fwd_maturity {
        return Err(SimError::ForwardVarianceDomain {
            t: t_last,
            t_fwd: cfg.fwd_maturity,
        });
    }
    let tables = hybrid::RbergomiTables::new(cfg);
    match cfg.fv_scheme {
        crate::market::FvScheme::ExactExponential => {
            Ok((0..grid.len()).map(|k| tables.fv_exact(theta[k], k)).collect())
        }
        crate::market::FvScheme::EulerMaruyama => {
            // dW recovered from the theta increments through the cell loadings.
            let n = grid.len() - 1;
            let mut dw = vec![0.0; n];
            for j in 0..n {
                let w = tables.fv_weights[j];
                dw[j] = if w > 0.0 { (theta[j + 1] - theta[j]) / w } else { 0.0 };
            }
            let mut fv = vec![0.0; grid.len()];
            tables.fv_euler(&dw, &mut fv);
            Ok(fv)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::FvScheme;

    #[test]
    fn forward_variance_is_flat_level_at_time_zero_and_zero_volofvol() {
        let mut cfg = MarketConfig::default();
        cfg.nu = 0.0;
        let n = cfg.n_steps();
        let theta = vec![0.0; n + 1];
        let fv = forward_variance_path(&theta, &cfg).unwrap();
        for &x in &fv {
            assert!((x - cfg.xi0).abs() < 1e-15);
        }
        cfg.fv_scheme = FvScheme::EulerMaruyama;
        let fv = forward_variance_path(&theta, &cfg).unwrap();
        for &x in &fv {
            assert!((x - cfg.xi0).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_variance_rejects_grid_reaching_maturity() {
        let mut cfg = MarketConfig::default();
        cfg.fwd_maturity = cfg.maturity + 1e-12;
        // validate() passes (fwd > T) but the grid end sits essentially at T_fwd;
        // push maturity onto the forward maturity instead:
        cfg.maturity = cfg.fwd_maturity;
        let theta = vec![0.0; cfg.n_steps() + 1];
        assert!(forward_variance_path(&theta, &cfg).is_err());
    }
}
