//! Simulated path batches. Immutable after construction apart from attaching a
//! terminal payoff column.

use crate::market::MarketConfig;
use crate::simulation::SimError;

/// A batch of simulated paths: stock, spot variance and traded forward variance
/// on the trading grid, plus the driving Gaussian increments (kept for oracle
/// tests and conditional-curve reconstruction) and an optional payoff column.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    market: MarketConfig,
    grid: Vec<f64>,
    n_paths: usize,
    n_steps: usize,
    s: Vec<f64>,
    v: Vec<f64>,
    fv: Vec<f64>,
    dw: Vec<f64>,
    db: Vec<f64>,
    payoff: Vec<f64>,
}

impl PathSet {
    pub(crate) fn from_parts(
        market: MarketConfig,
        grid: Vec<f64>,
        n_paths: usize,
        s: Vec<f64>,
        v: Vec<f64>,
        fv: Vec<f64>,
        dw: Vec<f64>,
        db: Vec<f64>,
    ) -> Result<Self, SimError> {
        let n_steps = grid.len() - 1;
        let set = Self {
            market,
            grid,
            n_paths,
            n_steps,
            s,
            v,
            fv,
            dw,
            db,
            payoff: Vec::new(),
        };
        set.check()?;
        Ok(set)
    }

    /// Assemble a path set from raw columns; used by tests and the cache reader.
    /// Validates shapes, grid monotonicity and strict positivity of S, V, FV.
    pub fn from_raw(
        market: MarketConfig,
        grid: Vec<f64>,
        s: Vec<f64>,
        v: Vec<f64>,
        fv: Vec<f64>,
        dw: Vec<f64>,
        db: Vec<f64>,
    ) -> Result<Self, SimError> {
        if grid.len() < 2 {
            return Err(SimError::Shape("grid needs at least two nodes".into()));
        }
        let n_steps = grid.len() - 1;
        let cols = n_steps + 1;
        if s.len() % cols != 0 {
            return Err(SimError::Shape("stock column length mismatch".into()));
        }
        let n_paths = s.len() / cols;
        if v.len() != s.len() || fv.len() != s.len() {
            return Err(SimError::Shape("V/FV column length mismatch".into()));
        }
        if dw.len() != n_paths * n_steps || db.len() != n_paths * n_steps {
            return Err(SimError::Shape("increment column length mismatch".into()));
        }
        Self::from_parts(market, grid, n_paths, s, v, fv, dw, db)
    }

    fn check(&self) -> Result<(), SimError> {
        for w in self.grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(SimError::Shape("grid must be strictly increasing".into()));
            }
        }
        for (name, col) in [("S", &self.s), ("V", &self.v), ("FV", &self.fv)] {
            if let Some((idx, &bad)) = col
                .iter()
                .enumerate()
                .find(|(_, x)| !(x.is_finite() && **x > 0.0))
            {
                return Err(SimError::NonFinite {
                    field: name,
                    path: idx / (self.n_steps + 1),
                    value: bad,
                });
            }
        }
        if self.dw.iter().chain(self.db.iter()).any(|x| !x.is_finite()) {
            return Err(SimError::Shape("non-finite driving increment".into()));
        }
        Ok(())
    }

    pub fn market(&self) -> &MarketConfig {
        &self.market
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn stock(&self, path: usize) -> &[f64] {
        let c = self.n_steps + 1;
        &self.s[path * c..(path + 1) * c]
    }

    pub fn variance(&self, path: usize) -> &[f64] {
        let c = self.n_steps + 1;
        &self.v[path * c..(path + 1) * c]
    }

    pub fn forward_variance(&self, path: usize) -> &[f64] {
        let c = self.n_steps + 1;
        &self.fv[path * c..(path + 1) * c]
    }

    pub fn dw(&self, path: usize) -> &[f64] {
        &self.dw[path * self.n_steps..(path + 1) * self.n_steps]
    }

    pub fn db(&self, path: usize) -> &[f64] {
        &self.db[path * self.n_steps..(path + 1) * self.n_steps]
    }

    pub fn terminal_stock(&self, path: usize) -> f64 {
        self.stock(path)[self.n_steps]
    }

    /// Terminal payoff column, if one has been attached.
    pub fn payoff(&self) -> Option<&[f64]> {
        if self.payoff.is_empty() {
            None
        } else {
            Some(&self.payoff)
        }
    }

    pub fn set_payoff(&mut self, values: Vec<f64>) -> Result<(), SimError> {
        if values.len() != self.n_paths {
            return Err(SimError::Shape(format!(
                "payoff column has {} entries for {} paths",
                values.len(),
                self.n_paths
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(SimError::Shape("non-finite payoff value".into()));
        }
        self.payoff = values;
        Ok(())
    }

    /// Copy of the last `count` paths; payoff column is carried along.
    pub fn tail(&self, count: usize) -> PathSet {
        let count = count.min(self.n_paths);
        let start = self.n_paths - count;
        let c = self.n_steps + 1;
        let mut out = PathSet {
            market: self.market,
            grid: self.grid.clone(),
            n_paths: count,
            n_steps: self.n_steps,
            s: self.s[start * c..].to_vec(),
            v: self.v[start * c..].to_vec(),
            fv: self.fv[start * c..].to_vec(),
            dw: self.dw[start * self.n_steps..].to_vec(),
            db: self.db[start * self.n_steps..].to_vec(),
            payoff: Vec::new(),
        };
        if !self.payoff.is_empty() {
            out.payoff = self.payoff[start..].to_vec();
        }
        out
    }

    /// Copy of the first `count` paths; payoff column is carried along.
    pub fn head(&self, count: usize) -> PathSet {
        let count = count.min(self.n_paths);
        let c = self.n_steps + 1;
        let mut out = PathSet {
            market: self.market,
            grid: self.grid.clone(),
            n_paths: count,
            n_steps: self.n_steps,
            s: self.s[..count * c].to_vec(),
            v: self.v[..count * c].to_vec(),
            fv: self.fv[..count * c].to_vec(),
            dw: self.dw[..count * self.n_steps].to_vec(),
            db: self.db[..count * self.n_steps].to_vec(),
            payoff: Vec::new(),
        };
        if !self.payoff.is_empty() {
            out.payoff = self.payoff[..count].to_vec();
        }
        out
    }

    pub(crate) fn raw_columns(&self) -> (&[f64], &[f64], &[f64], &[f64], &[f64], &[f64]) {
        (&self.s, &self.v, &self.fv, &self.dw, &self.db, &self.payoff)
    }
}
