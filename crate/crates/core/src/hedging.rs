//! P&L accounting shared by deep and model hedges: payoffs, Monte-Carlo
//! pricing, trading-gain and transaction-cost aggregation, and distribution
//! reports with plot-ready serialisations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulation::PathSet;
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum HedgeError {
    #[error("empty path set")]
    EmptyPathSet,
    #[error("strike must be strictly positive, got {0}")]
    BadStrike(f64),
    #[error("cost rate must be non-negative, got {0}")]
    BadCostRate(f64),
    #[error("strategy shape ({paths}, {steps}, {instruments}) does not match paths ({want_paths}, {want_steps}, 2)")]
    ShapeMismatch {
        paths: usize,
        steps: usize,
        instruments: usize,
        want_paths: usize,
        want_steps: usize,
    },
    #[error("paths carry no payoff column; attach one before computing P&L")]
    MissingPayoff,
}

/// Terminal claim to hedge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    VanillaCall { strike: f64 },
}

impl Payoff {
    pub fn vanilla_call(strike: f64) -> Result<Self, HedgeError> {
        if !(strike > 0.0) {
            return Err(HedgeError::BadStrike(strike));
        }
        Ok(Payoff::VanillaCall { strike })
    }

    #[inline]
    pub fn value(&self, terminal_stock: f64) -> f64 {
        match self {
            Payoff::VanillaCall { strike } => (terminal_stock - strike).max(0.0),
        }
    }

    /// Fill the payoff column of a path set from its terminal stock values.
    pub fn attach(&self, paths: &mut PathSet) {
        let values: Vec<f64> = (0..paths.n_paths())
            .map(|p| self.value(paths.terminal_stock(p)))
            .collect();
        paths
            .set_payoff(values)
            .expect("payoff column has one value per path");
    }
}

/// Proportional transaction costs on traded notional; zero trade costs zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    /// Cost rate per unit of traded notional, per instrument.
    pub rate: f64,
    /// Charge unwinding the final position at the last rebalancing price.
    pub terminal_liquidation: bool,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self {
            rate: 0.0,
            terminal_liquidation: false,
        }
    }
}

impl CostSpec {
    pub fn proportional(rate: f64) -> Result<Self, HedgeError> {
        if !(rate >= 0.0) {
            return Err(HedgeError::BadCostRate(rate));
        }
        Ok(Self {
            rate,
            terminal_liquidation: false,
        })
    }
}

/// Holdings per (path, step, instrument); instrument 0 is the stock,
/// instrument 1 the forward variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    n_paths: usize,
    n_steps: usize,
    n_instruments: usize,
    data: Vec<f64>,
}

impl Strategy {
    pub fn zeros(n_paths: usize, n_steps: usize, n_instruments: usize) -> Self {
        Self {
            n_paths,
            n_steps,
            n_instruments,
            data: vec![0.0; n_paths * n_steps * n_instruments],
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_instruments(&self) -> usize {
        self.n_instruments
    }

    #[inline]
    pub fn get(&self, path: usize, step: usize, instrument: usize) -> f64 {
        self.data[(path * self.n_steps + step) * self.n_instruments + instrument]
    }

    #[inline]
    pub fn set(&mut self, path: usize, step: usize, instrument: usize, value: f64) {
        self.data[(path * self.n_steps + step) * self.n_instruments + instrument] = value;
    }

    /// Holdings of one path as a (step, instrument) row-major slice.
    pub fn path(&self, path: usize) -> &[f64] {
        let stride = self.n_steps * self.n_instruments;
        &self.data[path * stride..(path + 1) * stride]
    }

    pub(crate) fn path_mut(&mut self, path: usize) -> &mut [f64] {
        let stride = self.n_steps * self.n_instruments;
        &mut self.data[path * stride..(path + 1) * stride]
    }
}

/// Monte-Carlo price of a payoff as the sample mean over terminal stock values.
pub fn mc_price(paths: &PathSet, payoff: &Payoff) -> Result<(f64, f64), HedgeError> {
    if paths.n_paths() == 0 {
        return Err(HedgeError::EmptyPathSet);
    }
    let values: Vec<f64> = (0..paths.n_paths())
        .map(|p| payoff.value(paths.terminal_stock(p)))
        .collect();
    Ok((stats::mean(&values), stats::stderr_of_mean(&values)))
}

/// Histogram with Freedman–Diaconis core bins clipped to the [1%, 99%]
/// quantile range plus two outlier tail buckets, so extreme paths stay
/// countable without destroying resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Bin edges, length = number of bins + 1 (first/last bins are the tails).
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn freedman_diaconis(values: &[f64]) -> Histogram {
        let n = values.len();
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (min, max) = (sorted[0], sorted[n - 1]);
        let q01 = stats::quantile_sorted(&sorted, 0.01);
        let q99 = stats::quantile_sorted(&sorted, 0.99);
        let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
        let width = 2.0 * iqr / (n as f64).cbrt();
        let core_span = q99 - q01;
        let n_core = if width > 0.0 && core_span > 0.0 {
            ((core_span / width).ceil() as usize).clamp(1, 2000)
        } else {
            1
        };
        let mut edges = Vec::with_capacity(n_core + 3);
        edges.push(min);
        let step = core_span / n_core as f64;
        for i in 0..=n_core {
            let e = q01 + step * i as f64;
            if e > *edges.last().unwrap() {
                edges.push(e);
            }
        }
        if max > *edges.last().unwrap() {
            edges.push(max);
        } else {
            // ensure the top edge strictly covers the maximum
            let last = edges.len() - 1;
            edges[last] = max;
        }
        if edges.len() < 2 {
            // constant sample: one bin of nominal width
            edges = vec![min, min + 1e-12];
        }
        let n_bins = edges.len() - 1;
        let mut counts = vec![0u64; n_bins];
        for &x in values {
            // rightmost bin is closed on both sides
            let mut idx = match edges.binary_search_by(|e| e.partial_cmp(&x).unwrap()) {
                Ok(i) => i,
                Err(i) => i.saturating_sub(1),
            };
            if idx >= n_bins {
                idx = n_bins - 1;
            }
            counts[idx] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Terminal P&L of a hedged position, per path, with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlReport {
    pub pnl: Vec<f64>,
    pub quadratic_loss: f64,
    pub mean: f64,
    pub stdev: f64,
    /// (probability, value) pairs at 1%, 5%, 50%, 95%, 99%.
    pub quantiles: Vec<(f64, f64)>,
    pub histogram: Histogram,
    pub worst_path_id: usize,
}

impl PnlReport {
    pub fn from_pnl(pnl: Vec<f64>) -> PnlReport {
        let quadratic_loss = pnl.iter().map(|x| x * x).sum::<f64>() / pnl.len() as f64;
        let mean = stats::mean(&pnl);
        let stdev = stats::sample_variance(&pnl).sqrt();
        let mut sorted = pnl.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let quantiles = [0.01, 0.05, 0.5, 0.95, 0.99]
            .iter()
            .map(|&p| (p, stats::quantile_sorted(&sorted, p)))
            .collect();
        let worst_path_id = pnl
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let histogram = Histogram::freedman_diaconis(&pnl);
        PnlReport {
            pnl,
            quadratic_loss,
            mean,
            stdev,
            quantiles,
            histogram,
            worst_path_id,
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        stats::quantile(&self.pnl, p)
    }

    /// Summary statistics as JSON (per-path values excluded).
    pub fn stats_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_paths": self.pnl.len(),
            "quadratic_loss": self.quadratic_loss,
            "mean": self.mean,
            "stdev": self.stdev,
            "quantiles": self.quantiles,
            "worst_path_id": self.worst_path_id,
        })
    }

    pub fn pnl_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "path_id,pnl")?;
        for (i, x) in self.pnl.iter().enumerate() {
            writeln!(out, "{i},{x:.12e}")?;
        }
        Ok(())
    }

    pub fn histogram_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "bin_left,bin_right,count")?;
        for (i, c) in self.histogram.counts.iter().enumerate() {
            writeln!(
                out,
                "{:.12e},{:.12e},{c}",
                self.histogram.edges[i],
                self.histogram.edges[i + 1]
            )?;
        }
        Ok(())
    }
}

/// Mean squared P&L; identical to the training objective when costs are zero.
pub fn quadratic_loss(report: &PnlReport) -> f64 {
    report.quadratic_loss
}

/// Per-path terminal P&L of trading `strategy` against the paths:
/// -Z + p0 + sum_k delta_k . (price_{k+1} - price_k) - costs.
///
/// Costs charge `rate * |position change| * price` at every rebalancing time,
/// plus optional liquidation of the final position at the last rebalancing
/// price.
pub fn pnl(
    paths: &PathSet,
    strategy: &Strategy,
    p0: f64,
    costs: &CostSpec,
) -> Result<PnlReport, HedgeError> {
    let n_paths = paths.n_paths();
    let n_steps = paths.n_steps();
    if n_paths == 0 {
        return Err(HedgeError::EmptyPathSet);
    }
    if strategy.n_paths != n_paths || strategy.n_steps != n_steps || strategy.n_instruments != 2 {
        return Err(HedgeError::ShapeMismatch {
            paths: strategy.n_paths,
            steps: strategy.n_steps,
            instruments: strategy.n_instruments,
            want_paths: n_paths,
            want_steps: n_steps,
        });
    }
    if !(costs.rate >= 0.0) {
        return Err(HedgeError::BadCostRate(costs.rate));
    }
    let payoff = paths.payoff().ok_or(HedgeError::MissingPayoff)?;
    let mut out = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let s = paths.stock(p);
        let fv = paths.forward_variance(p);
        let row = strategy.path(p);
        let mut gains = 0.0;
        let mut cost = 0.0;
        let mut prev = [0.0; 2];
        for k in 0..n_steps {
            let d = [row[2 * k], row[2 * k + 1]];
            gains += d[0] * (s[k + 1] - s[k]) + d[1] * (fv[k + 1] - fv[k]);
            if costs.rate > 0.0 {
                cost += costs.rate * ((d[0] - prev[0]).abs() * s[k] + (d[1] - prev[1]).abs() * fv[k]);
            }
            prev = d;
        }
        if costs.rate > 0.0 && costs.terminal_liquidation {
            cost += costs.rate
                * (prev[0].abs() * s[n_steps - 1] + prev[1].abs() * fv[n_steps - 1]);
        }
        out.push(-payoff[p] + p0 + gains - cost);
    }
    Ok(PnlReport::from_pnl(out))
}

// ---------------------------------------------------------------------------
// Black–Scholes closed forms (zero rates), used as reduction oracles
// ---------------------------------------------------------------------------

/// Black–Scholes call price and delta with zero rates.
pub fn black_scholes_call(spot: f64, strike: f64, vol: f64, tau: f64) -> (f64, f64) {
    if tau <= 0.0 || vol <= 0.0 {
        let intrinsic = (spot - strike).max(0.0);
        let delta = if spot > strike {
            1.0
        } else if spot == strike {
            0.5
        } else {
            0.0
        };
        return (intrinsic, delta);
    }
    let sig = vol * tau.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * sig * sig) / sig;
    let d2 = d1 - sig;
    let nd1 = stats::normal_cdf(d1);
    let nd2 = stats::normal_cdf(d2);
    (spot * nd1 - strike * nd2, nd1)
}

/// Discrete Black–Scholes delta hedge of a vanilla call on the given paths,
/// rebalanced at every grid node with the closed-form delta. Serves as the
/// oracle strategy in zero vol-of-vol reductions.
pub fn bs_delta_strategy(paths: &PathSet, strike: f64, vol: f64) -> Strategy {
    let n = paths.n_steps();
    let t_end = paths.grid()[n];
    let mut strategy = Strategy::zeros(paths.n_paths(), n, 2);
    for p in 0..paths.n_paths() {
        let s = paths.stock(p);
        for k in 0..n {
            let tau = t_end - paths.grid()[k];
            let (_, delta) = black_scholes_call(s[k], strike, vol, tau);
            strategy.set(p, k, 0, delta);
        }
    }
    strategy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketConfig;
    use crate::simulation::simulate_rbergomi;

    fn small_paths(n_paths: usize) -> PathSet {
        let mut cfg = MarketConfig::default();
        cfg.seed = 33;
        let mut paths = simulate_rbergomi(&cfg, n_paths).unwrap();
        Payoff::vanilla_call(100.0).unwrap().attach(&mut paths);
        paths
    }

    #[test]
    fn zero_strategy_pnl_is_price_minus_payoff() {
        let paths = small_paths(64);
        let strategy = Strategy::zeros(64, paths.n_steps(), 2);
        let p0 = 2.4;
        let report = pnl(&paths, &strategy, p0, &CostSpec::default()).unwrap();
        let payoff = paths.payoff().unwrap();
        for p in 0..64 {
            assert!((report.pnl[p] - (p0 - payoff[p])).abs() < 1e-12);
        }
    }

    #[test]
    fn buy_and_hold_telescopes() {
        let paths = small_paths(32);
        let n = paths.n_steps();
        let mut strategy = Strategy::zeros(32, n, 2);
        for p in 0..32 {
            for k in 0..n {
                strategy.set(p, k, 0, 1.0);
            }
        }
        let p0 = 2.4;
        let report = pnl(&paths, &strategy, p0, &CostSpec::default()).unwrap();
        let payoff = paths.payoff().unwrap();
        for p in 0..32 {
            let expected = p0 - payoff[p] + (paths.terminal_stock(p) - paths.stock(p)[0]);
            assert!((report.pnl[p] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn hand_computed_two_step_pnl() {
        // Single path, two steps, hand-set prices and holdings.
        let mut cfg = MarketConfig::default();
        cfg.trading_days = 2;
        let grid = vec![0.0, 1.0 / 365.0, 2.0 / 365.0];
        let s = vec![100.0, 104.0, 98.0];
        let v = vec![0.04, 0.05, 0.06];
        let fv = vec![0.04, 0.045, 0.043];
        let dw = vec![0.0, 0.0];
        let db = vec![0.0, 0.0];
        let mut paths = PathSet::from_raw(cfg, grid, s, v, fv, dw, db).unwrap();
        paths.set_payoff(vec![3.0]).unwrap();
        let mut strategy = Strategy::zeros(1, 2, 2);
        strategy.set(0, 0, 0, 0.5); // stock holdings
        strategy.set(0, 1, 0, -0.25);
        strategy.set(0, 0, 1, 10.0); // forward-variance holdings
        strategy.set(0, 1, 1, 4.0);
        let p0 = 2.0;
        // gains = 0.5*(104-100) + 10*(0.045-0.04) + (-0.25)*(98-104) + 4*(0.043-0.045)
        //       = 2 + 0.05 + 1.5 - 0.008 = 3.542
        // costs at rate 0.01: step0: 0.01*(0.5*100 + 10*0.04) = 0.504
        //   step1: 0.01*(0.75*104 + 6*0.045) = 0.7827
        //   liquidation: 0.01*(0.25*104 + 4*0.045) = 0.2618
        let report = pnl(&paths, &strategy, p0, &CostSpec::default()).unwrap();
        assert!((report.pnl[0] - (-3.0 + 2.0 + 3.542)).abs() < 1e-12);
        let costs = CostSpec {
            rate: 0.01,
            terminal_liquidation: true,
        };
        let report = pnl(&paths, &strategy, p0, &costs).unwrap();
        let expected = -3.0 + 2.0 + 3.542 - (0.504 + 0.7827 + 0.2618);
        assert!(
            (report.pnl[0] - expected).abs() < 1e-12,
            "{} vs {expected}",
            report.pnl[0]
        );
    }

    #[test]
    fn cash_invariance_shifts_pnl_exactly() {
        let paths = small_paths(40);
        let strategy = Strategy::zeros(40, paths.n_steps(), 2);
        let a = pnl(&paths, &strategy, 2.0, &CostSpec::default()).unwrap();
        let b = pnl(&paths, &strategy, 3.25, &CostSpec::default()).unwrap();
        for p in 0..40 {
            assert!((b.pnl[p] - a.pnl[p] - 1.25).abs() < 1e-12);
        }
    }

    #[test]
    fn costs_shift_pnl_down_pathwise() {
        let paths = small_paths(40);
        let n = paths.n_steps();
        let mut strategy = Strategy::zeros(40, n, 2);
        for p in 0..40 {
            for k in 0..n {
                strategy.set(p, k, 0, ((p + k) % 3) as f64 - 1.0);
                strategy.set(p, k, 1, (k % 2) as f64);
            }
        }
        let free = pnl(&paths, &strategy, 2.4, &CostSpec::default()).unwrap();
        let costly = pnl(
            &paths,
            &strategy,
            2.4,
            &CostSpec::proportional(0.002).unwrap(),
        )
        .unwrap();
        for p in 0..40 {
            assert!(costly.pnl[p] <= free.pnl[p] + 1e-15);
        }
        assert!(costly.quadratic_loss >= free.quadratic_loss);
    }

    #[test]
    fn quadratic_loss_of_simple_vectors() {
        let r = PnlReport::from_pnl(vec![0.0, 0.0, 0.0]);
        assert_eq!(quadratic_loss(&r), 0.0);
        let r = PnlReport::from_pnl(vec![1.0, -1.0]);
        assert_eq!(quadratic_loss(&r), 1.0);
        assert!(r.quadratic_loss >= r.mean * r.mean);
    }

    #[test]
    fn histogram_counts_cover_all_paths() {
        let paths = small_paths(500);
        let strategy = Strategy::zeros(500, paths.n_steps(), 2);
        let report = pnl(&paths, &strategy, 2.4, &CostSpec::default()).unwrap();
        assert_eq!(report.histogram.total(), 500);
        assert_eq!(
            report.pnl[report.worst_path_id],
            report.pnl.iter().cloned().fold(f64::INFINITY, f64::min)
        );
    }

    #[test]
    fn mc_price_zero_strike_recovers_forward() {
        let paths = small_paths(20_000);
        // strike ~ 0: call on (almost) zero strike equals the forward = s0
        let (p0, se) = mc_price(&paths, &Payoff::vanilla_call(1e-9).unwrap()).unwrap();
        assert!((p0 - (100.0 - 1e-9)).abs() < 3.0 * se + 1e-6);
    }

    #[test]
    fn bs_closed_form_sanity() {
        let (price, delta) = black_scholes_call(100.0, 100.0, 0.2, 1.0);
        // put-call parity at zero rates: C - P = S - K and ATM symmetry
        let sig = 0.2_f64;
        let d1 = 0.5 * sig;
        assert!((delta - stats::normal_cdf(d1)).abs() < 1e-15);
        assert!(price > 7.9 && price < 8.1); // ~ S sigma sqrt(T) 0.3989 * 2 adjusted
        let (deep, d_deep) = black_scholes_call(1000.0, 100.0, 0.2, 0.01);
        assert!((deep - 900.0).abs() < 1e-6);
        assert!((d_deep - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let paths = small_paths(8);
        let strategy = Strategy::zeros(8, 3, 2);
        assert!(matches!(
            pnl(&paths, &strategy, 0.0, &CostSpec::default()),
            Err(HedgeError::ShapeMismatch { .. })
        ));
    }
}
