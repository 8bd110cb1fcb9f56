//! Discretised "perfect" hedge for rough Bergomi: nested Monte-Carlo
//! conditional pricing, a finite-difference stock delta, and the
//! forward-variance weight obtained by bumping the conditional curve along the
//! kernel direction.
//!
//! The conditional state at (path, step) is the piecewise-constant conditional
//! forward-variance curve over the remaining grid cells, reconstructed from the
//! stored Brownian increments with the same kernel points the hybrid sampler
//! uses. With that choice the inner simulation composes exactly with the outer
//! one, so conditional prices satisfy the tower property up to pure Monte-Carlo
//! noise.

use rayon::prelude::*;
use thiserror::Error;

use crate::hedging::{pnl, CostSpec, HedgeError, Payoff, PnlReport, Strategy};
use crate::market::{MarketConfig, ModelKind};
use crate::rng::CounterRng;
use crate::simulation::kernel;
use crate::simulation::{PathSet, SimError};

const STREAM_INNER: u64 = 0x1a;

#[derive(Debug, Error)]
pub enum MhError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Hedge(#[from] HedgeError),
    #[error("model hedge requires rough Bergomi paths, got {0:?}")]
    WrongModel(ModelKind),
    #[error("inner Monte-Carlo produced a non-finite price at path {path}, step {step}")]
    NonFiniteInner { path: usize, step: usize },
    #[error("{0}")]
    Shape(String),
}

/// Nested Monte-Carlo settings.
#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    /// Inner paths per conditional price (antithetic pairs).
    pub inner_paths: usize,
    /// Stock bump as a fraction of the initial stock level.
    pub eps_stock_rel: f64,
    /// Relative bump rate of the conditional curve along the kernel direction.
    pub eps_curve_rel: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            inner_paths: 2_000,
            eps_stock_rel: 1e-2,
            eps_curve_rel: 1e-2,
            seed: 0x6d68,
        }
    }
}

/// Market state at a rebalancing time: spot level plus the conditional
/// forward-variance curve, one level per remaining grid cell (the first cell
/// holds the current spot variance).
#[derive(Debug, Clone)]
pub struct ConditionalState {
    pub step: usize,
    pub t: f64,
    pub stock: f64,
    pub curve: Vec<f64>,
}

/// Hedge ratios at one (path, step), with the Monte-Carlo settings that
/// produced them.
#[derive(Debug, Clone, Copy)]
pub struct HedgeWeights {
    pub delta_s: f64,
    pub delta_fv: f64,
    pub inner_paths: usize,
    pub bump_eps: f64,
}

/// Grid-level tables shared by every conditional evaluation on one path set.
struct InnerTables {
    n: usize,
    dt: f64,
    sqrt_dt: f64,
    h: f64,
    xi0: f64,
    nu2: f64,
    sqrt2h_nu: f64,
    rho: f64,
    rho_perp: f64,
    /// Hybrid Riemann kernel weights by lag (shared with curve reconstruction).
    riemann: Vec<f64>,
    sing_w: f64,
    sing_perp: f64,
    /// 0.5 nu^2 (j dt)^{2H} by lag.
    comp_lag: Vec<f64>,
    /// Kernel direction at cell midpoints: ((j + 1/2) dt)^{H - 1/2}.
    a_mid: Vec<f64>,
    /// (j dt)^{2H} by lag, for curve compensators.
    pow_2h_lag: Vec<f64>,
}

impl InnerTables {
    fn new(market: &MarketConfig) -> InnerTables {
        let n = market.n_steps();
        let dt = market.dt();
        let h = market.hurst;
        let two_h = 2.0 * h;
        InnerTables {
            n,
            dt,
            sqrt_dt: dt.sqrt(),
            h,
            xi0: market.xi0,
            nu2: market.nu * market.nu,
            sqrt2h_nu: two_h.sqrt() * market.nu,
            rho: market.rho,
            rho_perp: (1.0 - market.rho * market.rho).max(0.0).sqrt(),
            riemann: kernel::riemann_kernel_weights(n, dt, h),
            sing_w: kernel::singular_coefs(dt, h).0,
            sing_perp: kernel::singular_coefs(dt, h).1,
            comp_lag: (0..=n)
                .map(|j| 0.5 * market.nu * market.nu * (j as f64 * dt).powf(two_h))
                .collect(),
            a_mid: (0..n)
                .map(|j| ((j as f64 + 0.5) * dt).powf(h - 0.5))
                .collect(),
            pow_2h_lag: (0..=n).map(|j| (j as f64 * dt).powf(two_h)).collect(),
        }
    }
}

/// Conditional state of one outer path at a grid node: the current spot
/// variance heads the curve, later cells are reconstructed from the stored
/// driving increments with the hybrid kernel points.
pub fn conditional_state(paths: &PathSet, path: usize, step: usize) -> Result<ConditionalState, MhError> {
    let market = paths.market();
    if market.model == ModelKind::Heston {
        return Err(MhError::WrongModel(market.model));
    }
    let tables = InnerTables::new(market);
    Ok(build_state(&tables, paths, path, step))
}

fn build_state(tb: &InnerTables, paths: &PathSet, path: usize, step: usize) -> ConditionalState {
    let n = tb.n;
    let remaining = n - step;
    let mut curve = Vec::with_capacity(remaining);
    if remaining > 0 {
        curve.push(paths.variance(path)[step]);
        let dw = paths.dw(path);
        let grid = paths.grid();
        for i in step + 1..n {
            // theta for maturity t_i given information at t_step
            let mut theta = 0.0;
            for (j, &dwj) in dw.iter().enumerate().take(step) {
                theta = tb.riemann[i - j].mul_add(dwj, theta);
            }
            theta *= tb.sqrt2h_nu;
            let lag = i - step;
            // 0.5 nu^2 ((t_i - t_step)^{2H} - t_i^{2H})
            let comp = 0.5 * tb.nu2 * (tb.pow_2h_lag[lag] - grid[i].powf(2.0 * tb.h));
            curve.push(tb.xi0 * (theta + comp).exp());
        }
    }
    ConditionalState {
        step,
        t: paths.grid()[step],
        stock: paths.stock(path)[step],
        curve,
    }
}

/// One nested Monte-Carlo sweep from a conditional state. Evaluates the base
/// price, the stock-bumped price and the curve-bumped price on common random
/// numbers; the curve bump multiplies cell i by (1 + eps a_i).
struct InnerRun {
    u: f64,
    u_stderr: f64,
    u_stock_bump: f64,
    u_curve_bump: f64,
}

fn inner_run(
    tb: &InnerTables,
    state: &ConditionalState,
    payoff: &Payoff,
    mc: &McConfig,
    stream: &[u64],
    eps_stock: f64,
) -> InnerRun {
    let m = state.curve.len();
    if m == 0 {
        let u = payoff.value(state.stock);
        return InnerRun {
            u,
            u_stderr: 0.0,
            u_stock_bump: payoff.value(state.stock + eps_stock),
            u_curve_bump: u,
        };
    }
    let n_pairs = (mc.inner_paths / 2).max(1);
    // bumped curve ratio per cell: (1 + eps a_i)
    let bump: Vec<f64> = (0..m)
        .map(|i| 1.0 + mc.eps_curve_rel * tb.a_mid[i])
        .collect();
    let mut sum_u = 0.0;
    let mut sum_u_sq = 0.0;
    let mut sum_us = 0.0;
    let mut sum_ub = 0.0;
    let mut dws = vec![0.0; m];
    let mut sing = vec![0.0; m];
    let mut dbs = vec![0.0; m];
    let mut x = vec![0.0; m];
    for pair in 0..n_pairs {
        let mut ids = Vec::with_capacity(stream.len() + 1);
        ids.extend_from_slice(stream);
        ids.push(pair as u64);
        let mut rng = CounterRng::from_stream(mc.seed, &ids);
        for j in 0..m {
            let z1 = rng.next_normal();
            let z2 = rng.next_normal();
            let z3 = rng.next_normal();
            dws[j] = tb.sqrt_dt * z1;
            sing[j] = tb.sing_w * dws[j] + tb.sing_perp * z2;
            dbs[j] = tb.sqrt_dt * z3;
        }
        // Volterra values at inner nodes 0..m-1 (x[0] = 0); node j needs lags <= j
        x[0] = 0.0;
        for k in 1..m {
            let mut acc = sing[k - 1];
            for j in 0..k.saturating_sub(1) {
                acc = tb.riemann[k - j].mul_add(dws[j], acc);
            }
            x[k] = acc;
        }
        let mut pair_u = 0.0;
        for leg in [1.0, -1.0] {
            let mut log_g = 0.0;
            let mut log_gb = 0.0;
            for j in 0..m {
                let e = (tb.sqrt2h_nu * leg * x[j] - tb.comp_lag[j]).exp();
                let v = state.curve[j] * e;
                let vb = v * bump[j];
                let z = leg * (tb.rho * dws[j] + tb.rho_perp * dbs[j]);
                log_g += v.sqrt() * z - 0.5 * v * tb.dt;
                log_gb += vb.sqrt() * z - 0.5 * vb * tb.dt;
            }
            let g = log_g.exp();
            let gb = log_gb.exp();
            let u = payoff.value(state.stock * g);
            pair_u += u;
            sum_u += u;
            sum_us += payoff.value((state.stock + eps_stock) * g);
            sum_ub += payoff.value(state.stock * gb);
        }
        sum_u_sq += (pair_u / 2.0) * (pair_u / 2.0);
    }
    let n_inner = (2 * n_pairs) as f64;
    let u = sum_u / n_inner;
    let pair_mean_var =
        (sum_u_sq / n_pairs as f64 - u * u).max(0.0) / (n_pairs as f64 - 1.0).max(1.0);
    InnerRun {
        u,
        u_stderr: pair_mean_var.sqrt(),
        u_stock_bump: sum_us / n_inner,
        u_curve_bump: sum_ub / n_inner,
    }
}

/// Conditional option price at a state: inner Monte-Carlo restart of the
/// dynamics from (stock, curve). Deterministic given the seed; an empty
/// remaining grid returns the intrinsic value exactly.
pub fn conditional_price(
    state: &ConditionalState,
    payoff: &Payoff,
    market: &MarketConfig,
    mc: &McConfig,
) -> Result<(f64, f64), MhError> {
    let tb = InnerTables::new(market);
    let run = inner_run(&tb, state, payoff, mc, &[STREAM_INNER, state.step as u64], market.s0 * mc.eps_stock_rel);
    if !run.u.is_finite() {
        return Err(MhError::NonFiniteInner {
            path: 0,
            step: state.step,
        });
    }
    Ok((run.u, run.u_stderr))
}

/// Forward-difference stock delta with common random numbers.
pub fn stock_delta(
    state: &ConditionalState,
    payoff: &Payoff,
    market: &MarketConfig,
    mc: &McConfig,
) -> Result<f64, MhError> {
    let tb = InnerTables::new(market);
    let eps = market.s0 * mc.eps_stock_rel;
    let run = inner_run(&tb, state, payoff, mc, &[STREAM_INNER, state.step as u64], eps);
    Ok((run.u_stock_bump - run.u) / eps)
}

/// Directional derivative of the conditional price along the kernel direction,
/// taken multiplicatively on the curve: cell i is scaled by (1 + eps a_i) in a
/// single common-random-number re-evaluation and the difference quotient is
/// returned. This is the sensitivity that prices the traded forward variance.
pub fn gateaux_weight(
    state: &ConditionalState,
    payoff: &Payoff,
    market: &MarketConfig,
    mc: &McConfig,
) -> Result<f64, MhError> {
    let tb = InnerTables::new(market);
    let eps = market.s0 * mc.eps_stock_rel;
    let run = inner_run(&tb, state, payoff, mc, &[STREAM_INNER, state.step as u64], eps);
    Ok((run.u_curve_bump - run.u) / mc.eps_curve_rel)
}

/// Same derivative, evaluated cell by cell: each remaining cell is bumped on
/// its own and the partials are summed against the direction. Costs one inner
/// sweep per cell; used to validate the single-sweep version.
pub fn gateaux_weight_percell(
    state: &ConditionalState,
    payoff: &Payoff,
    market: &MarketConfig,
    mc: &McConfig,
) -> Result<f64, MhError> {
    let tb = InnerTables::new(market);
    let eps = market.s0 * mc.eps_stock_rel;
    let m = state.curve.len();
    let base = inner_run(&tb, state, payoff, mc, &[STREAM_INNER, state.step as u64], eps);
    let mut total = 0.0;
    for i in 0..m {
        let mut tb_single = InnerTables::new(market);
        // direction restricted to cell i: zero elsewhere
        for (j, a) in tb_single.a_mid.iter_mut().enumerate() {
            if j != i {
                *a = 0.0;
            }
        }
        let run = inner_run(
            &tb_single,
            state,
            payoff,
            mc,
            &[STREAM_INNER, state.step as u64],
            eps,
        );
        total += (run.u_curve_bump - base.u) / mc.eps_curve_rel;
    }
    Ok(total)
}

/// Run the discretised perfect hedge over a batch of outer paths.
///
/// At every (path, step) the stock delta and the forward-variance weight
/// delta_FV = gateaux / (FV * (T_fwd - t)^{H - 1/2}) are computed by nested
/// Monte-Carlo with per-(path, step) substreams; P&L is settled with the
/// supplied price `p0`.
pub fn model_hedge_run(
    outer: &PathSet,
    payoff: &Payoff,
    mc: &McConfig,
    p0: f64,
) -> Result<(Strategy, PnlReport), MhError> {
    let market = *outer.market();
    if market.model == ModelKind::Heston {
        return Err(MhError::WrongModel(market.model));
    }
    let n = outer.n_steps();
    let n_paths = outer.n_paths();
    if n_paths == 0 {
        return Err(MhError::Shape("empty outer path set".into()));
    }
    let tb = InnerTables::new(&market);
    let eps_stock = market.s0 * mc.eps_stock_rel;
    let rows: Result<Vec<Vec<f64>>, MhError> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut row = vec![0.0; n * 2];
            for k in 0..n {
                let state = build_state(&tb, outer, p, k);
                let run = inner_run(
                    &tb,
                    &state,
                    payoff,
                    mc,
                    &[STREAM_INNER, p as u64, k as u64],
                    eps_stock,
                );
                if !(run.u.is_finite() && run.u_stock_bump.is_finite() && run.u_curve_bump.is_finite())
                {
                    return Err(MhError::NonFiniteInner { path: p, step: k });
                }
                let delta_s = (run.u_stock_bump - run.u) / eps_stock;
                let weight = (run.u_curve_bump - run.u) / mc.eps_curve_rel;
                let fv = outer.forward_variance(p)[k];
                let t = outer.grid()[k];
                let delta_fv =
                    weight / (fv * (market.fwd_maturity - t).powf(market.hurst - 0.5));
                if !(-0.1..=1.1).contains(&delta_s) {
                    log::warn!(
                        "stock delta {delta_s:.4} outside [-0.1, 1.1] at path {p}, step {k}"
                    );
                }
                row[2 * k] = delta_s;
                row[2 * k + 1] = delta_fv;
            }
            Ok(row)
        })
        .collect();
    let rows = rows?;
    let mut strategy = Strategy::zeros(n_paths, n, 2);
    for (p, row) in rows.into_iter().enumerate() {
        strategy.path_mut(p).copy_from_slice(&row);
    }
    let mut priced = outer.clone();
    payoff.attach(&mut priced);
    let report = pnl(&priced, &strategy, p0, &CostSpec::default())?;
    Ok((strategy, report))
}

/// Per-step hedge-weight dump for inspection.
pub fn weights_csv(
    paths: &PathSet,
    strategy: &Strategy,
    out: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(out, "path,step,t,S,FV,delta_S,delta_FV")?;
    for p in 0..strategy.n_paths() {
        for k in 0..strategy.n_steps() {
            writeln!(
                out,
                "{p},{k},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                paths.grid()[k],
                paths.stock(p)[k],
                paths.forward_variance(p)[k],
                strategy.get(p, k, 0),
                strategy.get(p, k, 1),
            )?;
        }
    }
    Ok(())
}
