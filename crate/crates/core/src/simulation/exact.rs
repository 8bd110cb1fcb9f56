//! Exact sampler for the joint law of the Brownian increments and the Volterra
//! process at the grid nodes, via a dense covariance factorisation. Slow but
//! distribution-exact; the arbiter for hybrid-scheme correctness.

use rayon::prelude::*;

use crate::market::{MarketConfig, ModelKind};
use crate::rng::CounterRng;
use crate::simulation::hybrid::{path_stream, RbergomiTables, STREAM_EXACT};
use crate::simulation::kernel;
use crate::simulation::{PathSet, SimError};

/// Hard cap on the grid size for the dense factorisation.
pub const MAX_EXACT_STEPS: usize = 256;

/// Lower-triangular Cholesky factor with an indefiniteness check. Pivots inside
/// the numerical noise band are clamped; genuinely negative pivots abort.
fn cholesky_lower(a: &[f64], dim: usize) -> Result<Vec<f64>, SimError> {
    let scale = (0..dim)
        .map(|i| a[i * dim + i].abs())
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let tol = 1e-10 * scale;
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if sum < -tol {
                    return Err(SimError::IndefiniteCovariance { pivot: i });
                }
                l[i * dim + i] = sum.max(tol * 1e-4).sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Ok(l)
}

/// Sample rough Bergomi paths with the Volterra values drawn exactly.
///
/// The joint Gaussian vector `(dW_0..dW_{n-1}, X_{t_1}..X_{t_n})` is factorised
/// from closed-form and quadrature kernel integrals; variance, stock and forward
/// variance are then assembled exactly as in the hybrid sampler.
pub fn simulate_volterra_exact(cfg: &MarketConfig, n_paths: usize) -> Result<PathSet, SimError> {
    cfg.validate()?;
    if cfg.model == ModelKind::Heston {
        return Err(SimError::Shape(
            "simulate_volterra_exact called with a Heston configuration".into(),
        ));
    }
    if n_paths == 0 {
        return Err(SimError::NoPaths);
    }
    let n = cfg.n_steps();
    if n > MAX_EXACT_STEPS {
        return Err(SimError::GridTooLarge {
            n,
            max: MAX_EXACT_STEPS,
        });
    }
    let tables = RbergomiTables::new(cfg);
    let dt = cfg.dt();
    let h = cfg.hurst;
    let gl = kernel::default_gl_rule();
    let dim = 2 * n;
    let mut cov = vec![0.0; dim * dim];
    for j in 0..n {
        cov[j * dim + j] = dt;
    }
    for k in 1..=n {
        let row = n + k - 1;
        for j in 0..n {
            let c = kernel::volterra_increment_cov(k, j, dt, h);
            cov[row * dim + j] = c;
            cov[j * dim + row] = c;
        }
        for l in k..=n {
            let c = kernel::volterra_node_cov(k, l, dt, h, &gl);
            let col = n + l - 1;
            cov[row * dim + col] = c;
            cov[col * dim + row] = c;
        }
    }
    let lower = cholesky_lower(&cov, dim)?;

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
            let mut rng = CounterRng::from_stream(cfg.seed, &[STREAM_EXACT, stream]);
            let mut z = vec![0.0; dim];
            for zi in z.iter_mut() {
                *zi = sign * rng.next_normal();
            }
            let mut x = vec![0.0; cols];
            for i in 0..dim {
                let mut acc = 0.0;
                for (k, &zk) in z.iter().enumerate().take(i + 1) {
                    acc = lower[i * dim + k].mul_add(zk, acc);
                }
                if i < n {
                    dwr[i] = acc;
                } else {
                    x[i - n + 1] = acc;
                }
            }
            for item in dbr.iter_mut() {
                *item = tables.sqrt_dt * sign * rng.next_normal();
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
    use crate::stats;

    #[test]
    fn node_variances_match_closed_form() {
        // Var(X_{t_k}) = t_k^{2H} / (2H), checked through log V
        let mut cfg = MarketConfig::default();
        cfg.seed = 3;
        let n_paths = 20_000;
        let paths = simulate_volterra_exact(&cfg, n_paths).unwrap();
        let n = paths.n_steps();
        for k in [1usize, 10, n] {
            let t = paths.grid()[k];
            let xs: Vec<f64> = (0..n_paths)
                .map(|p| {
                    (paths.variance(p)[k] / cfg.xi0).ln()
                        + 0.5 * cfg.nu * cfg.nu * t.powf(2.0 * cfg.hurst)
                })
                .collect();
            // xs = sqrt(2H) nu X_{t_k}; Var = nu^2 t^{2H}
            let target = cfg.nu * cfg.nu * t.powf(2.0 * cfg.hurst);
            let var = stats::sample_variance(&xs);
            let se = target * (2.0 / (n_paths as f64 - 1.0)).sqrt();
            assert!(
                (var - target).abs() < 3.0 * se,
                "k={k}: var={var} target={target}"
            );
        }
    }

    #[test]
    fn brownian_reduction_has_min_covariance() {
        // H = 0.5: X is standard Brownian motion; check Cov(X_s, X_t) = min(s, t)
        let mut cfg = MarketConfig::default();
        cfg.hurst = 0.5;
        cfg.seed = 17;
        let n_paths = 30_000;
        let paths = simulate_volterra_exact(&cfg, n_paths).unwrap();
        let sqrt2h_nu = (2.0 * cfg.hurst).sqrt() * cfg.nu;
        let n = paths.n_steps();
        let x_at = |p: usize, k: usize| {
            ((paths.variance(p)[k] / cfg.xi0).ln()
                + 0.5 * cfg.nu * cfg.nu * paths.grid()[k].powf(2.0 * cfg.hurst))
                / sqrt2h_nu
        };
        let (k1, k2) = (n / 3, n);
        let a: Vec<f64> = (0..n_paths).map(|p| x_at(p, k1)).collect();
        let b: Vec<f64> = (0..n_paths).map(|p| x_at(p, k2)).collect();
        let ma = stats::mean(&a);
        let mb = stats::mean(&b);
        let cov = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n_paths as f64 - 1.0);
        let expected = paths.grid()[k1];
        assert!(
            (cov - expected).abs() < 4.0 * expected / (n_paths as f64).sqrt() * 2.0,
            "cov={cov} expected={expected}"
        );
    }

    #[test]
    fn grid_cap_is_enforced() {
        let mut cfg = MarketConfig::default();
        cfg.trading_days = 400;
        assert!(matches!(
            simulate_volterra_exact(&cfg, 2),
            Err(SimError::GridTooLarge { .. })
        ));
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let a = vec![1.0, 0.0, 0.0, -1.0];
        assert!(matches!(
            cholesky_lower(&a, 2),
            Err(SimError::IndefiniteCovariance { pivot: 1 })
        ));
    }
}
