//! Heston baseline: CIR variance under full-truncation Euler (robust to Feller
//! violations), martingale stock, and the CIR conditional mean as the traded
//! forward-variance column.

use rayon::prelude::*;

use crate::market::{MarketConfig, ModelKind};
use crate::rng::CounterRng;
use crate::simulation::hybrid::{path_stream, STREAM_HESTON};
use crate::simulation::{PathSet, SimError};

/// Positivity floor applied to the stored variance column; the truncation
/// auxiliary process itself is allowed to run negative internally.
const VAR_FLOOR: f64 = 1e-12;

pub fn simulate_heston(cfg: &MarketConfig, n_paths: usize) -> Result<PathSet, SimError> {
    cfg.validate()?;
    if cfg.model != ModelKind::Heston {
        return Err(SimError::Shape(
            "simulate_heston requires model = heston".into(),
        ));
    }
    if n_paths == 0 {
        return Err(SimError::NoPaths);
    }
    let n = cfg.n_steps();
    let dt = cfg.dt();
    let sqrt_dt = dt.sqrt();
    let grid = cfg.grid();
    let hp = cfg.heston;
    let rho = cfg.rho;
    let rho_perp = (1.0 - rho * rho).max(0.0).sqrt();
    // FV_k = b + (V_k - b) e^{-alpha (T_fwd - t_k)}
    let fv_decay: Vec<f64> = grid
        .iter()
        .map(|&t| (-hp.alpha * (cfg.fwd_maturity - t)).exp())
        .collect();

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
            let mut rng = CounterRng::from_stream(cfg.seed, &[STREAM_HESTON, stream]);
            let mut v_aux = hp.v0;
            sr[0] = cfg.s0;
            for k in 0..n {
                let v_pos = v_aux.max(0.0);
                vr[k] = v_pos.max(VAR_FLOOR);
                fvr[k] = hp.b + (vr[k] - hp.b) * fv_decay[k];
                let z1 = sign * rng.next_normal();
                let z2 = sign * rng.next_normal();
                dwr[k] = sqrt_dt * z1;
                dbr[k] = sqrt_dt * z2;
                let z = rho * dwr[k] + rho_perp * dbr[k];
                sr[k + 1] = sr[k] * (v_pos.sqrt() * z - 0.5 * v_pos * dt).exp();
                v_aux += hp.alpha * (hp.b - v_pos) * dt + hp.sigma * v_pos.sqrt() * dwr[k];
            }
            vr[n] = v_aux.max(0.0).max(VAR_FLOOR);
            fvr[n] = hp.b + (vr[n] - hp.b) * fv_decay[n];
        });

    PathSet::from_parts(*cfg, grid, n_paths, s, v, fv, dw, db)
}
