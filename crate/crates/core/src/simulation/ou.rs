//! Markovian approximation of fractional Brownian motion as a weighted sum of
//! Ornstein–Uhlenbeck factors sharing one Brownian driver. Exists to
//! demonstrate that a fixed-step simulation of this mixture does not reproduce
//! the target roughness (the estimated Hurst exponent stays near 1/2).

use rayon::prelude::*;

use crate::market::{MarketConfig, ModelKind};
use crate::rng::CounterRng;
use crate::simulation::hybrid::{path_stream, RbergomiTables, STREAM_OU};
use crate::simulation::{PathSet, SimError};
use crate::stats::gamma_fn;

/// Quadrature of the speed measure: factors `Y^{x_i}` with weights `w_i`
/// approximating `B^H_t = int Y^x_t mu(dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuApproxConfig {
    pub speeds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl OuApproxConfig {
    /// Geometric speed grid on [x_min, x_max] with cell-mass weights of the
    /// kernel mixture measure mu(dx) = dx / (x^a G(a) G(1-a)), a = H + 1/2.
    /// The representation exists for H < 1/2; H = 1/2 degenerates to the single
    /// zero-speed factor (plain Brownian motion).
    pub fn geometric(h: f64, n_terms: usize, x_min: f64, x_max: f64) -> Result<Self, SimError> {
        if n_terms == 0 {
            return Err(SimError::OuQuadrature("need at least one factor".into()));
        }
        if h == 0.5 {
            return Ok(Self {
                speeds: vec![0.0],
                weights: vec![1.0],
            });
        }
        if !(h > 0.0 && h < 0.5) {
            return Err(SimError::OuQuadrature(format!(
                "kernel mixture representation needs H in (0, 1/2], got {h}"
            )));
        }
        if !(x_min > 0.0 && x_max > x_min) {
            return Err(SimError::OuQuadrature(
                "speed range must satisfy 0 < x_min < x_max".into(),
            ));
        }
        let a = h + 0.5;
        let norm = std::f64::consts::PI / (std::f64::consts::PI * a).sin(); // G(a) G(1-a)
        let ratio = (x_max / x_min).powf(1.0 / n_terms as f64);
        let mut speeds = Vec::with_capacity(n_terms);
        let mut weights = Vec::with_capacity(n_terms);
        let mut lo = x_min;
        for _ in 0..n_terms {
            let hi = lo * ratio;
            speeds.push((lo * hi).sqrt());
            weights.push((hi.powf(1.0 - a) - lo.powf(1.0 - a)) / ((1.0 - a) * norm));
            lo = hi;
        }
        Ok(Self { speeds, weights })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.speeds.is_empty() || self.speeds.len() != self.weights.len() {
            return Err(SimError::OuQuadrature(
                "speed and weight grids must be non-empty and of equal length".into(),
            ));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(SimError::OuQuadrature("weights must be non-negative".into()));
        }
        if self.speeds.iter().any(|x| !(*x >= 0.0))
            || self.speeds.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(SimError::OuQuadrature(
                "speeds must be non-negative and increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Rough Bergomi style paths with the Volterra process replaced by the OU-sum
/// approximation of fractional Brownian motion, all factors stepped with the
/// exact mean-reversion decay and one shared Brownian increment per step.
pub fn simulate_ou_approx(
    cfg: &MarketConfig,
    ou: &OuApproxConfig,
    n_paths: usize,
) -> Result<PathSet, SimError> {
    cfg.validate()?;
    ou.validate()?;
    if cfg.model == ModelKind::Heston {
        return Err(SimError::Shape(
            "simulate_ou_approx called with a Heston configuration".into(),
        ));
    }
    if n_paths == 0 {
        return Err(SimError::NoPaths);
    }
    if cfg.hurst > 0.5 {
        return Err(SimError::OuQuadrature(
            "kernel mixture representation needs H <= 1/2".into(),
        ));
    }
    let tables = RbergomiTables::new(cfg);
    let n = tables.n;
    let dt = tables.dt;
    // x = G(H + 1/2) * B_hat feeds the same variance exponent as the kernel integral
    let kernel_norm = gamma_fn(cfg.hurst + 0.5);
    let decays: Vec<f64> = ou.speeds.iter().map(|&x| (-x * dt).exp()).collect();

    let cols = n + 1;
    let mut s = vec![0.0; n_paths * cols];
    let mut v = vec![0.0; n_paths * cols];
    let mut fv = vec![0.0; n_paths * cols];
    let mut dw = vec![0.0; n_paths * n];
    let mut db = vec![0.0; n_paths * n];

    s.par_chunks_mut(cols)
        .zip(v.par_chunks_mut(cols))
        .zip(fv.par_chunks_mut(cols))
        .zip(dw.par_chunks_mut(n))
        .zip(db.par_chunks_mut(n))
        .enumerate()
        .for_each(|(p, ((((sr, vr), fvr), dwr), dbr))| {
            let (stream, sign) = path_stream(cfg, n_paths, p);
            let mut rng = CounterRng::from_stream(cfg.seed, &[STREAM_OU, stream]);
            let mut factors = vec![0.0; ou.speeds.len()];
            let mut x = vec![0.0; cols];
            for k in 0..n {
                let z1 = sign * rng.next_normal();
                let z2 = sign * rng.next_normal();
                dwr[k] = tables.sqrt_dt * z1;
                dbr[k] = tables.sqrt_dt * z2;
                let mut bhat = 0.0;
                for (i, f) in factors.iter_mut().enumerate() {
                    *f = decays[i] * *f + dwr[k];
                    bhat += ou.weights[i] * *f;
                }
                x[k + 1] = kernel_norm * bhat;
            }
            tables.variance_from_volterra(&x, vr);
            tables.stock_path(vr, dwr, dbr, sr);
            tables.fill_fv(dwr, fvr);
        });

    PathSet::from_parts(*cfg, cfg.grid(), n_paths, s, v, fv, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_zero_speed_factor_is_brownian() {
        let ou = OuApproxConfig {
            speeds: vec![0.0],
            weights: vec![1.0],
        };
        let mut cfg = MarketConfig::default();
        cfg.hurst = 0.5; // kernel_norm = gamma(1) = 1
        let paths = simulate_ou_approx(&cfg, &ou, 6).unwrap();
        for p in 0..6 {
            // B_hat = W, so log V recovers xi0 exp(nu W_t - nu^2 t / 2) exactly
            // (sqrt(2H) = 1 and gamma(1) = 1 at H = 1/2).
            let mut w = 0.0;
            for k in 0..paths.n_steps() {
                w += paths.dw(p)[k];
                let t = paths.grid()[k + 1];
                let expected = cfg.xi0 * (cfg.nu * w - 0.5 * cfg.nu * cfg.nu * t).exp();
                assert!((paths.variance(p)[k + 1] - expected).abs() < 1e-12 * expected);
            }
        }
    }

    #[test]
    fn empty_quadrature_rejected() {
        let ou = OuApproxConfig {
            speeds: vec![],
            weights: vec![],
        };
        assert!(simulate_ou_approx(&MarketConfig::default(), &ou, 2).is_err());
        assert!(OuApproxConfig::geometric(0.1, 0, 1e-3, 1e3).is_err());
    }

    #[test]
    fn geometric_grid_shape() {
        let ou = OuApproxConfig::geometric(0.1, 64, 1e-3, 1e3).unwrap();
        ou.validate().unwrap();
        assert_eq!(ou.speeds.len(), 64);
        assert!(ou.speeds[0] > 1e-3 && ou.speeds[63] < 1e3);
        assert!(ou.weights.iter().all(|&w| w > 0.0));
        // mass of the truncated measure: (x_max^{1-a} - x_min^{1-a}) / ((1-a) G(a) G(1-a))
        let a: f64 = 0.6;
        let norm = std::f64::consts::PI / (std::f64::consts::PI * a).sin();
        let expected =
            (1e3_f64.powf(1.0 - a) - 1e-3_f64.powf(1.0 - a)) / ((1.0 - a) * norm);
        let total: f64 = ou.weights.iter().sum();
        assert!((total - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn hurst_above_half_is_rejected() {
        assert!(OuApproxConfig::geometric(0.7, 8, 1e-3, 1e3).is_err());
        let ou = OuApproxConfig::geometric(0.5, 8, 1e-3, 1e3).unwrap();
        assert_eq!(ou.speeds, vec![0.0]);
    }
}
