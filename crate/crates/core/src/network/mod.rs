//! Minimal differentiable feed-forward stack and the recurrent hedging policies.
//!
//! A policy is one multilayer perceptron per trading step plus a carried state:
//! the semi-recurrent architecture feeds the previous holdings back in, the
//! fully recurrent one carries an unconstrained hidden state alongside the
//! holdings, and the memoryless variant carries nothing. Gradients are exact
//! reverse-mode derivatives, backpropagated through the carry chain.

mod checkpoint;
mod train;

pub use checkpoint::{load_policy, save_policy, TrainMeta};
pub use train::{train, EpochRecord, Optimizer, TrainConfig};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hedging::Strategy;
use crate::rng::CounterRng;
use crate::simulation::PathSet;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("policy has {policy} steps but paths have {paths}")]
    GridMismatch { policy: usize, paths: usize },
    #[error("paths carry no payoff column")]
    MissingPayoff,
    #[error("non-finite loss first observed on path {path}")]
    NonFiniteLoss { path: usize },
    #[error("training diverged at epoch {epoch}: validation loss {val_loss} > 10 x baseline {baseline} for 5 consecutive epochs")]
    Diverged {
        epoch: usize,
        val_loss: f64,
        baseline: f64,
    },
    #[error("{0}")]
    Shape(String),
    #[error("train and validation sets must be disjoint (identical driving noise detected)")]
    SharedPaths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    fn derivative_from_output(&self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Hidden widths and activation of the per-step networks; output layer linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTopology {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for MlpTopology {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Per-step networks on (I_k, previous holdings).
    SemiRecurrent,
    /// Per-step networks passing an unconstrained hidden state forward.
    FullyRecurrent,
    /// Per-step networks on I_k alone; baseline without any feedback.
    Memoryless,
}

/// Mapping from path-set columns to the information process I_k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoSpec {
    /// (log(S_k / S_0), FV_k): log moneyness plus forward-variance level.
    #[default]
    LogMoneynessAndFv,
    /// (S_k, FV_k) untransformed; used by hand-computable tests.
    RawLevels,
}

impl InfoSpec {
    pub const DIM: usize = 2;

    #[inline]
    fn write(&self, paths: &PathSet, path: usize, step: usize, out: &mut [f64]) {
        let s = paths.stock(path)[step];
        let fv = paths.forward_variance(path)[step];
        match self {
            InfoSpec::LogMoneynessAndFv => {
                out[0] = (s / paths.stock(path)[0]).ln();
                out[1] = fv;
            }
            InfoSpec::RawLevels => {
                out[0] = s;
                out[1] = fv;
            }
        }
    }
}

/// Parameterised hedging strategy: per-step multilayer perceptrons with a
/// carried state between steps and a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    pub n_steps: usize,
    pub info_dim: usize,
    pub n_instruments: usize,
    pub topology: MlpTopology,
    /// Width of the recurrent hidden state (fully recurrent only).
    pub hidden_state: usize,
    pub params: Vec<f64>,
}

/// Per-step layer dimensions m_0 -> m_1 -> ... -> m_{L+1} and parameter offsets.
#[derive(Debug, Clone)]
struct Layout {
    dims: Vec<usize>,
    w_off: Vec<usize>,
    b_off: Vec<usize>,
    step_stride: usize,
}

impl Layout {
    fn new(policy: &Policy) -> Layout {
        let carry_in = policy.carry_width();
        let out_extra = match policy.kind {
            PolicyKind::FullyRecurrent => policy.hidden_state,
            _ => 0,
        };
        let mut dims = Vec::with_capacity(policy.topology.hidden.len() + 2);
        dims.push(policy.info_dim + carry_in);
        dims.extend_from_slice(&policy.topology.hidden);
        dims.push(policy.n_instruments + out_extra);
        let mut w_off = Vec::new();
        let mut b_off = Vec::new();
        let mut off = 0;
        for l in 0..dims.len() - 1 {
            w_off.push(off);
            off += dims[l] * dims[l + 1];
            b_off.push(off);
            off += dims[l + 1];
        }
        Layout {
            dims,
            w_off,
            b_off,
            step_stride: off,
        }
    }

    fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }
}

impl Policy {
    /// Fresh policy with uniform fan-in initial weights and zero biases.
    pub fn new(
        kind: PolicyKind,
        n_steps: usize,
        info_dim: usize,
        n_instruments: usize,
        topology: MlpTopology,
        hidden_state: usize,
        seed: u64,
    ) -> Result<Policy, NetError> {
        if n_steps == 0 || info_dim == 0 || n_instruments == 0 {
            return Err(NetError::Shape("all policy dimensions must be >= 1".into()));
        }
        if topology.hidden.iter().any(|&w| w == 0) {
            return Err(NetError::Shape("hidden widths must be >= 1".into()));
        }
        if kind == PolicyKind::FullyRecurrent && hidden_state == 0 {
            return Err(NetError::Shape(
                "fully recurrent policies need hidden state width >= 1".into(),
            ));
        }
        let mut policy = Policy {
            kind,
            n_steps,
            info_dim,
            n_instruments,
            topology,
            hidden_state: if kind == PolicyKind::FullyRecurrent {
                hidden_state
            } else {
                0
            },
            params: Vec::new(),
        };
        let layout = Layout::new(&policy);
        let mut params = vec![0.0; n_steps * layout.step_stride];
        let mut rng = CounterRng::from_stream(seed, &[0x1217]);
        for step in 0..n_steps {
            let base = step * layout.step_stride;
            for l in 0..layout.n_layers() {
                let (m, n) = (layout.dims[l], layout.dims[l + 1]);
                let bound = 1.0 / (m as f64).sqrt();
                for i in 0..m * n {
                    params[base + layout.w_off[l] + i] = (2.0 * rng.next_uniform() - 1.0) * bound;
                }
                // biases stay zero
            }
        }
        policy.params = params;
        Ok(policy)
    }

    /// Default desk configuration: two 32-wide hidden layers, two instruments,
    /// hidden state width matching the instrument count.
    pub fn standard(kind: PolicyKind, n_steps: usize, seed: u64) -> Policy {
        Policy::new(
            kind,
            n_steps,
            InfoSpec::DIM,
            2,
            MlpTopology::default(),
            2,
            seed,
        )
        .expect("standard dimensions are valid")
    }

    /// Width of the state carried between steps.
    pub fn carry_width(&self) -> usize {
        match self.kind {
            PolicyKind::SemiRecurrent => self.n_instruments,
            PolicyKind::FullyRecurrent => self.hidden_state,
            PolicyKind::Memoryless => 0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }
}

#[inline]
fn affine(x: &[f64], rows: usize, m: usize, w: &[f64], bias: &[f64], n: usize, out: &mut [f64]) {
    for r in 0..rows {
        let xrow = &x[r * m..(r + 1) * m];
        let orow = &mut out[r * n..(r + 1) * n];
        orow.copy_from_slice(bias);
        for (i, &xi) in xrow.iter().enumerate() {
            if xi != 0.0 {
                let wrow = &w[i * n..(i + 1) * n];
                for (o, &wj) in orow.iter_mut().zip(wrow) {
                    *o = wj.mul_add(xi, *o);
                }
            }
        }
    }
}

/// Forward pass over a batch of paths; caches activations when training.
struct BatchCtx<'a> {
    policy: &'a Policy,
    layout: Layout,
    paths: &'a PathSet,
    info: InfoSpec,
    batch: &'a [usize],
}

struct ForwardResult {
    /// Activations per step per layer boundary: acts[k][l] is B x dims[l].
    acts: Vec<Vec<Vec<f64>>>,
    /// Residual -Z + p0 + trading gains, per batch row.
    residual: Vec<f64>,
}

impl<'a> BatchCtx<'a> {
    fn forward(&self, p0: f64, keep_acts: bool) -> Result<ForwardResult, NetError> {
        let b = self.batch.len();
        let lay = &self.layout;
        let d = self.policy.n_instruments;
        let carry_w = self.policy.carry_width();
        let n_steps = self.policy.n_steps;
        let payoff = self.paths.payoff().ok_or(NetError::MissingPayoff)?;
        let mut residual: Vec<f64> = self.batch.iter().map(|&p| p0 - payoff[p]).collect();
        let mut carry = vec![0.0; b * carry_w.max(1)];
        let mut acts_all = Vec::with_capacity(if keep_acts { n_steps } else { 0 });
        let mut scratch: Vec<Vec<f64>> = lay.dims.iter().map(|&m| vec![0.0; b * m]).collect();
        for k in 0..n_steps {
            let m0 = lay.dims[0];
            for (r, &p) in self.batch.iter().enumerate() {
                let row = &mut scratch[0][r * m0..r * m0 + m0];
                self.info.write(self.paths, p, k, &mut row[..self.policy.info_dim]);
                row[self.policy.info_dim..].copy_from_slice(&carry[r * carry_w.max(1)..][..carry_w]);
            }
            for l in 0..lay.n_layers() {
                let (m, n) = (lay.dims[l], lay.dims[l + 1]);
                let base = k * lay.step_stride;
                let w = &self.policy.params[base + lay.w_off[l]..base + lay.w_off[l] + m * n];
                let bias = &self.policy.params[base + lay.b_off[l]..base + lay.b_off[l] + n];
                let (head, tail) = scratch.split_at_mut(l + 1);
                affine(&head[l], b, m, w, bias, n, &mut tail[0]);
                if l + 1 < lay.n_layers() {
                    for z in tail[0].iter_mut() {
                        *z = self.policy.topology.activation.apply(*z);
                    }
                }
            }
            let out_dim = lay.out_dim();
            let out = &scratch[lay.n_layers()];
            for (r, &p) in self.batch.iter().enumerate() {
                let s = self.paths.stock(p);
                let fv = self.paths.forward_variance(p);
                let orow = &out[r * out_dim..(r + 1) * out_dim];
                let mut g = orow[0] * (s[k + 1] - s[k]);
                if d > 1 {
                    g += orow[1] * (fv[k + 1] - fv[k]);
                }
                residual[r] += g;
                match self.policy.kind {
                    PolicyKind::SemiRecurrent => {
                        carry[r * carry_w..r * carry_w + carry_w].copy_from_slice(&orow[..d]);
                    }
                    PolicyKind::FullyRecurrent => {
                        carry[r * carry_w..r * carry_w + carry_w]
                            .copy_from_slice(&orow[d..d + carry_w]);
                    }
                    PolicyKind::Memoryless => {}
                }
            }
            if keep_acts {
                acts_all.push(scratch.clone());
            }
        }
        Ok(ForwardResult {
            acts: acts_all,
            residual,
        })
    }

    /// Loss over the batch and, if `grad` is given, the exact reverse-mode
    /// gradient accumulated into it (scaled for this batch's size).
    fn loss_and_accumulate_grad(&self, p0: f64, grad: Option<&mut [f64]>) -> Result<f64, NetError> {
        let b = self.batch.len();
        let lay = &self.layout;
        let d = self.policy.n_instruments;
        let carry_w = self.policy.carry_width();
        let fwd = self.forward(p0, grad.is_some())?;
        let loss = fwd.residual.iter().map(|g| g * g).sum::<f64>() / b as f64;
        if !loss.is_finite() {
            let bad = fwd
                .residual
                .iter()
                .position(|g| !g.is_finite())
                .map(|r| self.batch[r])
                .unwrap_or(0);
            return Err(NetError::NonFiniteLoss { path: bad });
        }
        let grad = match grad {
            Some(g) => g,
            None => return Ok(loss),
        };
        let scale = 2.0 / b as f64;
        let mut d_carry = vec![0.0; b * carry_w.max(1)];
        let mut has_backflow = false;
        // scratch gradients per layer boundary
        let mut dz: Vec<Vec<f64>> = lay.dims.iter().map(|&m| vec![0.0; b * m]).collect();
        for k in (0..self.policy.n_steps).rev() {
            let acts = &fwd.acts[k];
            let out_dim = lay.out_dim();
            let dout = &mut dz[lay.n_layers()];
            for (r, &p) in self.batch.iter().enumerate() {
                let s = self.paths.stock(p);
                let fv = self.paths.forward_variance(p);
                let row = &mut dout[r * out_dim..(r + 1) * out_dim];
                row.fill(0.0);
                let gr = scale * fwd.residual[r];
                row[0] = gr * (s[k + 1] - s[k]);
                if d > 1 {
                    row[1] = gr * (fv[k + 1] - fv[k]);
                }
                if has_backflow {
                    match self.policy.kind {
                        PolicyKind::SemiRecurrent => {
                            for i in 0..carry_w {
                                row[i] += d_carry[r * carry_w + i];
                            }
                        }
                        PolicyKind::FullyRecurrent => {
                            for i in 0..carry_w {
                                row[d + i] += d_carry[r * carry_w + i];
                            }
                        }
                        PolicyKind::Memoryless => {}
                    }
                }
            }
            let base = k * lay.step_stride;
            for l in (0..lay.n_layers()).rev() {
                let (m, n) = (lay.dims[l], lay.dims[l + 1]);
                let x = &acts[l];
                let (dz_in, dz_out) = {
                    let (head, tail) = dz.split_at_mut(l + 1);
                    (&mut head[l], &tail[0])
                };
                // parameter gradients
                let gw = &mut grad[base + lay.w_off[l]..base + lay.w_off[l] + m * n];
                for r in 0..b {
                    let xrow = &x[r * m..(r + 1) * m];
                    let dzrow = &dz_out[r * n..(r + 1) * n];
                    for (i, &xi) in xrow.iter().enumerate() {
                        if xi != 0.0 {
                            let grow = &mut gw[i * n..(i + 1) * n];
                            for (gj, &dj) in grow.iter_mut().zip(dzrow) {
                                *gj = xi.mul_add(dj, *gj);
                            }
                        }
                    }
                }
                let gb = &mut grad[base + lay.b_off[l]..base + lay.b_off[l] + n];
                for r in 0..b {
                    let dzrow = &dz_out[r * n..(r + 1) * n];
                    for (gj, &dj) in gb.iter_mut().zip(dzrow) {
                        *gj += dj;
                    }
                }
                // input gradient dX = dZ W^T, through the activation if hidden
                let w = &self.policy.params[base + lay.w_off[l]..base + lay.w_off[l] + m * n];
                for r in 0..b {
                    let dzrow = &dz_out[r * n..(r + 1) * n];
                    let dxrow = &mut dz_in[r * m..(r + 1) * m];
                    for i in 0..m {
                        let wrow = &w[i * n..(i + 1) * n];
                        let mut acc = 0.0;
                        for (wj, dj) in wrow.iter().zip(dzrow) {
                            acc = wj.mul_add(*dj, acc);
                        }
                        dxrow[i] = acc;
                    }
                }
                if l > 0 {
                    // dz through the activation of the previous boundary
                    let a = &acts[l];
                    for (dx, &av) in dz_in.iter_mut().zip(a.iter()) {
                        *dx *= self.policy.topology.activation.derivative_from_output(av);
                    }
                }
            }
            // carry gradient for step k-1 comes from this step's input slots
            if carry_w > 0 {
                let m0 = lay.dims[0];
                for r in 0..b {
                    for i in 0..carry_w {
                        d_carry[r * carry_w + i] = dz[0][r * m0 + self.policy.info_dim + i];
                    }
                }
                has_backflow = true;
            }
        }
        Ok(loss)
    }
}

/// Strategy values of a policy over a whole path set.
///
/// delta_k is computed only from (I_0..I_k) through the architecture's carry
/// recursion; the output is (n_paths, n_steps, instruments).
pub fn policy_forward(
    policy: &Policy,
    paths: &PathSet,
    info: InfoSpec,
) -> Result<Strategy, NetError> {
    if policy.n_steps != paths.n_steps() {
        return Err(NetError::GridMismatch {
            policy: policy.n_steps,
            paths: paths.n_steps(),
        });
    }
    let layout = Layout::new(policy);
    let d = policy.n_instruments;
    let n_paths = paths.n_paths();
    let mut strategy = Strategy::zeros(n_paths, policy.n_steps, d);
    let rows: Vec<(usize, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let ctx = BatchCtx {
                policy,
                layout: layout.clone(),
                paths,
                info,
                batch: std::slice::from_ref(&p),
            };
            // payoff column not needed for plain forward; reuse machinery with p0=0
            let mut deltas = vec![0.0; policy.n_steps * d];
            let lay = &ctx.layout;
            let carry_w = policy.carry_width();
            let mut carry = vec![0.0; carry_w.max(1)];
            let mut scratch: Vec<Vec<f64>> = lay.dims.iter().map(|&m| vec![0.0; m]).collect();
            for k in 0..policy.n_steps {
                let m0 = lay.dims[0];
                ctx.info.write(paths, p, k, &mut scratch[0][..policy.info_dim]);
                scratch[0][policy.info_dim..m0].copy_from_slice(&carry[..carry_w]);
                for l in 0..lay.n_layers() {
                    let (m, n) = (lay.dims[l], lay.dims[l + 1]);
                    let base = k * lay.step_stride;
                    let w = &policy.params[base + lay.w_off[l]..base + lay.w_off[l] + m * n];
                    let bias = &policy.params[base + lay.b_off[l]..base + lay.b_off[l] + n];
                    let (head, tail) = scratch.split_at_mut(l + 1);
                    affine(&head[l], 1, m, w, bias, n, &mut tail[0]);
                    if l + 1 < lay.n_layers() {
                        for z in tail[0].iter_mut() {
                            *z = policy.topology.activation.apply(*z);
                        }
                    }
                }
                let out = &scratch[lay.n_layers()];
                deltas[k * d..(k + 1) * d].copy_from_slice(&out[..d]);
                match policy.kind {
                    PolicyKind::SemiRecurrent => carry[..carry_w].copy_from_slice(&out[..d]),
                    PolicyKind::FullyRecurrent => {
                        carry[..carry_w].copy_from_slice(&out[d..d + carry_w])
                    }
                    PolicyKind::Memoryless => {}
                }
            }
            (p, deltas)
        })
        .collect();
    for (p, deltas) in rows {
        strategy.path_mut(p).copy_from_slice(&deltas);
    }
    Ok(strategy)
}

/// Fixed chunk width for parallel gradient accumulation; reduction order is
/// by chunk index, independent of thread count.
const GRAD_CHUNK: usize = 64;

/// Quadratic hedging loss and its exact gradient over the given batch indices.
pub fn loss_and_grad_batch(
    policy: &Policy,
    paths: &PathSet,
    info: InfoSpec,
    p0: f64,
    batch: &[usize],
) -> Result<(f64, Vec<f64>), NetError> {
    if policy.n_steps != paths.n_steps() {
        return Err(NetError::GridMismatch {
            policy: policy.n_steps,
            paths: paths.n_steps(),
        });
    }
    let layout = Layout::new(policy);
    let chunks: Vec<&[usize]> = batch.chunks(GRAD_CHUNK).collect();
    let partials: Result<Vec<(f64, Vec<f64>, usize)>, NetError> = chunks
        .into_par_iter()
        .map(|chunk| {
            let ctx = BatchCtx {
                policy,
                layout: layout.clone(),
                paths,
                info,
                batch: chunk,
            };
            let mut grad = vec![0.0; policy.params.len()];
            let loss = ctx.loss_and_accumulate_grad(p0, Some(&mut grad))?;
            Ok((loss, grad, chunk.len()))
        })
        .collect();
    let partials = partials?;
    let mut grad = vec![0.0; policy.params.len()];
    let mut loss = 0.0;
    let total = batch.len() as f64;
    for (chunk_loss, chunk_grad, len) in partials {
        let w = len as f64 / total;
        loss += chunk_loss * w;
        for (g, cg) in grad.iter_mut().zip(&chunk_grad) {
            *g += cg * w;
        }
    }
    Ok((loss, grad))
}

/// Loss and gradient over all paths in the set.
pub fn loss_and_grad(
    policy: &Policy,
    paths: &PathSet,
    info: InfoSpec,
    p0: f64,
) -> Result<(f64, Vec<f64>), NetError> {
    let batch: Vec<usize> = (0..paths.n_paths()).collect();
    loss_and_grad_batch(policy, paths, info, p0, &batch)
}

/// Loss only (forward pass), over all paths.
pub fn evaluate_loss(
    policy: &Policy,
    paths: &PathSet,
    info: InfoSpec,
    p0: f64,
) -> Result<f64, NetError> {
    if policy.n_steps != paths.n_steps() {
        return Err(NetError::GridMismatch {
            policy: policy.n_steps,
            paths: paths.n_steps(),
        });
    }
    let layout = Layout::new(policy);
    let batch: Vec<usize> = (0..paths.n_paths()).collect();
    let chunks: Vec<&[usize]> = batch.chunks(512).collect();
    let losses: Result<Vec<(f64, usize)>, NetError> = chunks
        .into_par_iter()
        .map(|chunk| {
            let ctx = BatchCtx {
                policy,
                layout: layout.clone(),
                paths,
                info,
                batch: chunk,
            };
            Ok((ctx.loss_and_accumulate_grad(p0, None)?, chunk.len()))
        })
        .collect();
    let losses = losses?;
    let total = batch.len() as f64;
    Ok(losses.iter().map(|(l, n)| l * *n as f64 / total).sum())
}
