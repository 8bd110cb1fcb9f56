//! Rough Bergomi sampler: hybrid scheme with one exact near-singularity term
//! per step and optimal-point Riemann weights for older cells.

use rayon::prelude::*;

use crate::market::{FvScheme, MarketConfig, ModelKind};
use crate::rng::CounterRng;
use crate::simulation::kernel;
use crate::simulation::{PathSet, SimError};

pub(crate) const STREAM_HYBRID: u64 = 0x51;
pub(crate) const STREAM_EXACT: u64 = 0x52;
pub(crate) const STREAM_HESTON: u64 = 0x53;
pub(crate) const STREAM_OU: u64 = 0x54;

/// Precomputed per-grid tables shared by all rough Bergomi style samplers.
pub(crate) struct RbergomiTables {
    pub n: usize,
    pub dt: f64,
    pub sqrt_dt: f64,
    pub xi0: f64,
    pub s0: f64,
    pub rho: f64,
    pub rho_perp: f64,
    /// sqrt(2H) nu, the loading of the Volterra process in the variance exponent.
    pub sqrt2h_nu: f64,
    /// 0.5 nu^2 t_k^{2H}: compensator of the stochastic exponential.
    pub comp: Vec<f64>,
    /// 0.5 nu^2 ((T_fwd - t_k)^{2H} - T_fwd^{2H}): deterministic forward-variance exponent.
    pub fv_det: Vec<f64>,
    /// Variance-matched cell loadings of the auxiliary process for the traded maturity.
    pub fv_weights: Vec<f64>,
    /// sqrt(2H) nu (T_fwd - t_k)^{H - 1/2}: Euler coefficients of the forward-variance SDE.
    pub fv_euler_coef: Vec<f64>,
    /// Hybrid Riemann kernel weights indexed by lag.
    pub riemann: Vec<f64>,
    pub sing_w: f64,
    pub sing_perp: f64,
    euler_fv: bool,
}

impl RbergomiTables {
    pub fn new(cfg: &MarketConfig) -> Self {
        let n = cfg.n_steps();
        let dt = cfg.dt();
        let grid = cfg.grid();
        let h = cfg.hurst;
        let two_h = 2.0 * h;
        let t_fwd = cfg.fwd_maturity;
        let comp: Vec<f64> = grid
            .iter()
            .map(|&t| 0.5 * cfg.nu * cfg.nu * t.powf(two_h))
            .collect();
        let fv_det: Vec<f64> = grid
            .iter()
            .map(|&t| 0.5 * cfg.nu * cfg.nu * ((t_fwd - t).powf(two_h) - t_fwd.powf(two_h)))
            .collect();
        let fv_weights = kernel::theta_cell_weights(&grid, t_fwd, h, cfg.nu);
        let fv_euler_coef: Vec<f64> = grid[..n]
            .iter()
            .map(|&t| (two_h).sqrt() * cfg.nu * (t_fwd - t).powf(h - 0.5))
            .collect();
        let (sing_w, sing_perp) = kernel::singular_coefs(dt, h);
        Self {
            n,
            dt,
            sqrt_dt: dt.sqrt(),
            xi0: cfg.xi0,
            s0: cfg.s0,
            rho: cfg.rho,
            rho_perp: (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt(),
            sqrt2h_nu: (two_h).sqrt() * cfg.nu,
            comp,
            fv_det,
            fv_weights,
            fv_euler_coef,
            riemann: kernel::riemann_kernel_weights(n, dt, h),
            sing_w,
            sing_perp,
            euler_fv: cfg.fv_scheme == FvScheme::EulerMaruyama,
        }
    }

    /// Volterra values at the grid nodes from Brownian increments and the
    /// per-cell exact singular terms.
    pub fn volterra_from_increments(&self, dw: &[f64], sing: &[f64], x: &mut [f64]) {
        x[0] = 0.0;
        for k in 1..=self.n {
            let mut acc = sing[k - 1];
            for j in 0..k.saturating_sub(1) {
                acc = self.riemann[k - j].mul_add(dw[j], acc);
            }
            x[k] = acc;
        }
    }

    pub fn variance_from_volterra(&self, x: &[f64], v: &mut [f64]) {
        for k in 0..=self.n {
            v[k] = self.xi0 * (self.sqrt2h_nu * x[k] - self.comp[k]).exp();
        }
    }

    /// Discrete martingale stock path: log-Euler with left-point variance.
    pub fn stock_path(&self, v: &[f64], dw: &[f64], db: &[f64], s: &mut [f64]) {
        s[0] = self.s0;
        for k in 0..self.n {
            let z = self.rho * dw[k] + self.rho_perp * db[k];
            let drift = -0.5 * v[k] * self.dt;
            s[k + 1] = s[k] * (v[k].sqrt() * z + drift).exp();
        }
    }

    #[inline]
    pub fn fv_exact(&self, theta_k: f64, k: usize) -> f64 {
        self.xi0 * (theta_k + self.fv_det[k]).exp()
    }

    pub fn fv_exact_path(&self, dw: &[f64], fv: &mut [f64]) {
        let mut theta = 0.0;
        fv[0] = self.fv_exact(0.0, 0);
        for k in 0..self.n {
            theta += self.fv_weights[k] * dw[k];
            fv[k + 1] = self.fv_exact(theta, k + 1);
        }
    }

    pub fn fv_euler(&self, dw: &[f64], fv: &mut [f64]) {
        let floor = self.xi0 * 1e-12;
        fv[0] = self.xi0;
        for k in 0..self.n {
            fv[k + 1] = (fv[k] * (1.0 + self.fv_euler_coef[k] * dw[k])).max(floor);
        }
    }

    pub fn fill_fv(&self, dw: &[f64], fv: &mut [f64]) {
        if self.euler_fv {
            self.fv_euler(dw, fv);
        } else {
            self.fv_exact_path(dw, fv);
        }
    }
}

/// Index of the substream a path draws from and the sign applied to its
/// normals; the second half of an antithetic batch mirrors the first.
#[inline]
pub(crate) fn path_stream(cfg: &MarketConfig, n_paths: usize, p: usize) -> (u64, f64) {
    if cfg.antithetic {
        let originals = n_paths.div_ceil(2);
        if p >= originals {
            return ((p - originals) as u64, -1.0);
        }
    }
    (p as u64, 1.0)
}

/// Simulate a rough Bergomi batch with the hybrid scheme.
///
/// Variance is the stochastic exponential of the power-kernel Volterra process,
/// the stock is a discrete martingale driven by the correlated pair (W, B) and
/// the traded forward variance is filled per the configured scheme.
pub fn simulate_rbergomi(cfg: &MarketConfig, n_paths: usize) -> Result<PathSet, SimError> {
    cfg.validate()?;
    if cfg.model == ModelKind::Heston {
        return Err(SimError::Shape(
            "simulate_rbergomi called with a Heston configuration".into(),
        ));
    }
    if n_paths == 0 {
        return Err(SimError::NoPaths);
    }
    let tables = RbergomiTables::new(cfg);
    let n = tables.n;
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
            let mut rng = CounterRng::from_stream(cfg.seed, &[STREAM_HYBRID, stream]);
            let mut sing = vec![0.0; n];
            let mut x = vec![0.0; cols];
            for j in 0..n {
                let z1 = sign * rng.next_normal();
                let z2 = sign * rng.next_normal();
                let z3 = sign * rng.next_normal();
                dwr[j] = tables.sqrt_dt * z1;
                sing[j] = tables.sing_w * dwr[j] + tables.sing_perp * z2;
                dbr[j] = tables.sqrt_dt * z3;
            }
            tables.volterra_from_increments(dwr, &sing, &mut x);
            tables.variance_from_volterra(&x, vr);
            tables.stock_path(vr, dwr, dbr, sr);
            tables.fill_fv(dwr, fvr);
        });

    PathSet::from_parts(*cfg, cfg.grid(), n_paths, s, v, fv, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn zero_volofvol_freezes_variance_and_forward_variance() {
        let mut cfg = MarketConfig::default();
        cfg.nu = 0.0;
        let paths = simulate_rbergomi(&cfg, 8).unwrap();
        for p in 0..8 {
            for k in 0..=paths.n_steps() {
                assert!((paths.variance(p)[k] - cfg.xi0).abs() < 1e-15);
                assert!((paths.forward_variance(p)[k] - cfg.xi0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn first_nodes_match_initial_conditions() {
        let cfg = MarketConfig::default();
        let paths = simulate_rbergomi(&cfg, 16).unwrap();
        for p in 0..16 {
            assert_eq!(paths.stock(p)[0], cfg.s0);
            assert_eq!(paths.variance(p)[0], cfg.xi0);
            assert_eq!(paths.forward_variance(p)[0], cfg.xi0);
        }
    }

    #[test]
    fn identical_seeds_reproduce_bitwise_across_thread_counts() {
        let cfg = MarketConfig::default();
        let a = simulate_rbergomi(&cfg, 64).unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool1.install(|| simulate_rbergomi(&cfg, 64).unwrap());
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let c = pool4.install(|| simulate_rbergomi(&cfg, 64).unwrap());
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn antithetic_batch_mirrors_noise_and_keeps_means() {
        let mut cfg = MarketConfig::default();
        cfg.antithetic = true;
        let paths = simulate_rbergomi(&cfg, 10).unwrap();
        for p in 0..5 {
            let dwp: Vec<f64> = paths.dw(p).to_vec();
            let dwm: Vec<f64> = paths.dw(p + 5).to_vec();
            for (a, b) in dwp.iter().zip(&dwm) {
                assert!((a + b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn log_variance_isometry_holds_at_maturity() {
        // Var(log V_T / xi0 + comp) = nu^2 T^{2H} (Ito isometry of the kernel integral)
        let mut cfg = MarketConfig::default();
        cfg.seed = 11;
        let n_paths = 20_000;
        let paths = simulate_rbergomi(&cfg, n_paths).unwrap();
        let n = paths.n_steps();
        let t = cfg.maturity;
        let target = cfg.nu * cfg.nu * t.powf(2.0 * cfg.hurst);
        let xs: Vec<f64> = (0..n_paths)
            .map(|p| (paths.variance(p)[n] / cfg.xi0).ln() + 0.5 * target)
            .collect();
        let var = stats::sample_variance(&xs);
        // stderr of a sample variance of a Gaussian: sigma^2 sqrt(2/(n-1))
        let se = target * (2.0 / (n_paths as f64 - 1.0)).sqrt();
        assert!(
            (var - target).abs() < 3.0 * se,
            "var = {var}, target = {target}, se = {se}"
        );
        let mean = stats::mean(&xs);
        assert!(mean.abs() < 3.0 * (target / n_paths as f64).sqrt());
    }
}
