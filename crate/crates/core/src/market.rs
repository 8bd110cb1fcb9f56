//! Model families and the parameter bundle that defines a data-generating process.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RoughBergomi,
    Heston,
    BlackScholes,
}

/// CIR variance parameters, used only when `model = Heston`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    /// Mean-reversion speed.
    pub alpha: f64,
    /// Long-run variance level.
    pub b: f64,
    /// Vol-of-vol.
    pub sigma: f64,
    /// Initial variance.
    pub v0: f64,
}

impl Default for HestonParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            b: 0.04,
            sigma: 0.8,
            v0: 0.04,
        }
    }
}

/// Discretisation of the traded forward-variance instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FvScheme {
    /// Lognormal closed form with per-cell variance matching; the discrete
    /// forward-variance series is an exact martingale.
    #[default]
    ExactExponential,
    /// Euler–Maruyama on the forward-variance SDE.
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketConfig {
    pub model: ModelKind,
    /// Hurst exponent in (0, 1).
    pub hurst: f64,
    /// Vol-of-vol.
    pub nu: f64,
    /// Spot/vol correlation in [-1, 1].
    pub rho: f64,
    /// Initial (flat) forward variance level.
    pub xi0: f64,
    /// Initial stock price.
    pub s0: f64,
    /// Option maturity in years.
    pub maturity: f64,
    /// Maturity of the traded forward variance, strictly greater than `maturity`
    /// so the instrument's kernel stays bounded on the trading grid.
    pub fwd_maturity: f64,
    /// Rebalancing frequency; 0.5 means every other day. The total step count
    /// `trading_days * steps_per_day` must come out integral.
    pub steps_per_day: f64,
    pub trading_days: u32,
    pub heston: HestonParams,
    pub fv_scheme: FvScheme,
    /// Mirror the second half of the batch with negated driving noise.
    pub antithetic: bool,
    pub seed: u64,
}

impl Default for MarketConfig {
    /// ATM monthly-hedging scenario: flat forward variance 0.235^2,
    /// nu = 1.9, rho = -0.7, daily grid over 30 days, forward variance at 45 days.
    fn default() -> Self {
        Self {
            model: ModelKind::RoughBergomi,
            hurst: 0.1,
            nu: 1.9,
            rho: -0.7,
            xi0: 0.235 * 0.235,
            s0: 100.0,
            maturity: 30.0 / DAYS_PER_YEAR,
            fwd_maturity: 45.0 / DAYS_PER_YEAR,
            steps_per_day: 1.0,
            trading_days: 30,
            heston: HestonParams::default(),
            fv_scheme: FvScheme::ExactExponential,
            antithetic: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("hurst exponent must lie in (0, 1), got {0}")]
    HurstOutOfRange(f64),
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("correlation must lie in [-1, 1], got {0}")]
    CorrelationOutOfRange(f64),
    #[error("forward-variance maturity {fwd} must exceed option maturity {t}")]
    ForwardMaturityTooShort { fwd: f64, t: f64 },
    #[error("trading_days * steps_per_day = {0} is not a positive integer")]
    FractionalStepCount(f64),
    #[error("nu must be non-negative, got {0}")]
    NegativeVolOfVol(f64),
    #[error("heston parameter {name} must be strictly positive, got {value}")]
    HestonNonPositive { name: &'static str, value: f64 },
}

impl MarketConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(MarketError::HurstOutOfRange(self.hurst));
        }
        for (name, value) in [
            ("xi0", self.xi0),
            ("s0", self.s0),
            ("maturity", self.maturity),
            ("steps_per_day", self.steps_per_day),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(MarketError::NonPositive { name, value });
            }
        }
        if !(self.nu >= 0.0) {
            return Err(MarketError::NegativeVolOfVol(self.nu));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(MarketError::CorrelationOutOfRange(self.rho));
        }
        if !(self.fwd_maturity > self.maturity) {
            return Err(MarketError::ForwardMaturityTooShort {
                fwd: self.fwd_maturity,
                t: self.maturity,
            });
        }
        let steps = self.trading_days as f64 * self.steps_per_day;
        if steps < 0.5 || (steps - steps.round()).abs() > 1e-9 {
            return Err(MarketError::FractionalStepCount(steps));
        }
        if self.model == ModelKind::Heston {
            for (name, value) in [
                ("alpha", self.heston.alpha),
                ("b", self.heston.b),
                ("sigma", self.heston.sigma),
                ("v0", self.heston.v0),
            ] {
                if !(value > 0.0) {
                    return Err(MarketError::HestonNonPositive { name, value });
                }
            }
        }
        Ok(())
    }

    /// Number of trading steps over [0, maturity].
    pub fn n_steps(&self) -> usize {
        (self.trading_days as f64 * self.steps_per_day).round() as usize
    }

    /// Grid spacing in years.
    pub fn dt(&self) -> f64 {
        self.maturity / self.n_steps() as f64
    }

    /// Trading grid 0 = t_0 < ... < t_n = maturity.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.n_steps();
        let dt = self.dt();
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_hurst(mut self, hurst: f64) -> Self {
        self.hurst = hurst;
        self
    }
}
