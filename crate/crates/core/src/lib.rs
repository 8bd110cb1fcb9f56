//! Hedging engines for rough-volatility market simulators.
//!
//! The crate is organised around six areas:
//!
//! * [`market`] — model families and the grid/parameter bundle shared by all simulators.
//! * [`simulation`] — correlated path batches for rough Bergomi (hybrid scheme plus an
//!   exact Cholesky sampler used as an oracle), Heston, Black–Scholes and the
//!   Ornstein–Uhlenbeck-sum approximation of fractional Brownian motion.
//! * [`hurst`] — structure-function estimation of the Hurst exponent.
//! * [`network`] — minimal feed-forward stack with exact reverse-mode gradients and the
//!   two recurrent hedging policy architectures.
//! * [`hedging`] — payoffs, Monte-Carlo pricing, P&L accounting and distribution reports.
//! * [`modelhedge`] — nested Monte-Carlo "perfect" hedge weights for rough Bergomi.
//! * [`experiment`] — declarative sweep runner with manifests and plot-ready CSV output.

pub mod hedging;
pub mod hurst;
pub mod market;
pub mod modelhedge;
pub mod network;
pub mod rng;
pub mod simulation;
pub mod stats;

pub use market::{HestonParams, MarketConfig, ModelKind};
pub use simulation::PathSet;
