use roughhedge::simulation::{simulate_rbergomi, simulate_volterra_exact};
use roughhedge::stats;
use std::time::Instant;

fn price(paths: &roughhedge::PathSet, k: f64) -> (f64, f64) {
    let pay: Vec<f64> = (0..paths.n_paths())
        .map(|p| (paths.terminal_stock(p) - k).max(0.0))
        .collect();
    (stats::mean(&pay), stats::stderr_of_mean(&pay))
}

fn main() {
    for (label, spd, paths_n, exact) in [
        ("exact 1/day", 1.0, 200_000usize, true),
        ("exact 2/day", 2.0, 150_000, true),
        ("exact 4/day", 4.0, 80_000, true),
        ("hybrid 4/day", 4.0, 100_000, false),
        ("hybrid 8/day", 8.0, 50_000, false),
    ] {
        let mut cfg = roughhedge::MarketConfig::default();
        cfg.seed = 777;
        cfg.steps_per_day = spd;
        let t0 = Instant::now();
        let paths = if exact {
            simulate_volterra_exact(&cfg, paths_n).unwrap()
        } else {
            simulate_rbergomi(&cfg, paths_n).unwrap()
        };
        let (p0, se) = price(&paths, 100.0);
        println!("{label}: p0 = {p0:.4} +- {se:.4}  ({:?})", t0.elapsed());
    }
}
