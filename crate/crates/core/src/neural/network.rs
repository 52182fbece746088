//! Batched forward and backward passes.
//!
//! Every layer is an affine map on a `rows × fan_in` matrix (im2col for
//! convolutions), followed for hidden layers by the activation and batch
//! normalization over the rows. All reductions run in a fixed order on one
//! thread, so results are bit-reproducible.

use super::kernels::{col2im, column_moments, im2col, matmul, matmul_a_bt, matmul_at_b_acc, BN_EPS};
use super::params::{Gradients, NetworkParameters};
use super::spec::{Activation, Kind, Plan};
use crate::error::{Result, SlpError};
use crate::matrix::ChannelMatrix;

/// Which statistics batch normalization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Statistics of the current batch (training).
    Batch,
    /// Stored running statistics (inference).
    Running,
}

/// Per-layer `(mean, variance)` of a training batch, for the running
/// averages.
pub type BatchStats = Vec<Option<(Vec<f64>, Vec<f64>)>>;

#[derive(Default)]
struct LayerTape {
    input: Vec<f64>,
    pre: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

pub(crate) struct Tape {
    batch: usize,
    mode: BnMode,
    layers: Vec<LayerTape>,
}

/// Packs channels into an NHWC batch `[batch, K, N_t, {re, im}]`.
pub(crate) fn encode_inputs(channels: &[&ChannelMatrix]) -> Vec<f64> {
    let mut out = Vec::new();
    for h in channels {
        for v in h.row_major() {
            out.push(v.re);
            out.push(v.im);
        }
    }
    out
}

struct Pass<'a> {
    plan: &'a Plan,
    params: &'a NetworkParameters,
    batch: usize,
    mode: BnMode,
    record: bool,
    tapes: Vec<LayerTape>,
    stats: BatchStats,
}

impl Pass<'_> {
    fn layer(&mut self, li: usize, input: &[f64]) -> Result<Vec<f64>> {
        let l = &self.plan.layers[li];
        let p = &self.params.layers[li];
        let rows = self.batch * l.positions();
        let a = match &l.kind {
            Kind::Conv(g) if !g.is_pointwise() => im2col(g, self.batch, input),
            _ => input.to_vec(),
        };
        let mut z = vec![0.0; rows * l.out];
        matmul(rows, l.fan_in, l.out, &a, &p.weight, &mut z);
        for r in z.chunks_exact_mut(l.out) {
            for (v, b) in r.iter_mut().zip(&p.bias) {
                *v += b;
            }
        }
        let mut tape = LayerTape::default();
        let mut stats = None;
        let y = if l.hidden {
            if self.record {
                tape.pre = z.clone();
            }
            if self.plan.activation == Activation::Relu {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            match &p.bn {
                None => z,
                Some(bn) => {
                    let (mean, var) = match self.mode {
                        BnMode::Batch => column_moments(rows, l.out, &z),
                        BnMode::Running => (bn.running_mean.clone(), bn.running_var.clone()),
                    };
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                    let mut xhat = z;
                    for r in xhat.chunks_exact_mut(l.out) {
                        for ((v, m), s) in r.iter_mut().zip(&mean).zip(&inv_std) {
                            *v = (*v - m) * s;
                        }
                    }
                    let mut y = xhat.clone();
                    for r in y.chunks_exact_mut(l.out) {
                        for ((v, g), b) in r.iter_mut().zip(&bn.gamma).zip(&bn.beta) {
                            *v = *v * g + b;
                        }
                    }
                    if self.mode == BnMode::Batch {
                        stats = Some((mean, var));
                    }
                    if self.record {
                        tape.xhat = xhat;
                        tape.inv_std = inv_std;
                    }
                    y
                }
            }
        } else {
            z
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SlpError::NonFinite { layer: l.name.clone() });
        }
        if self.record {
            tape.input = a;
        }
        self.tapes[li] = tape;
        self.stats[li] = stats;
        Ok(y)
    }
}

/// Runs the network on a packed input batch. Returns the raw output
/// (`batch × 2·N_t·N_par`, before power scaling), the tape when `record`
/// is set, and the batch statistics in [`BnMode::Batch`].
pub(crate) fn forward_batch(
    plan: &Plan,
    params: &NetworkParameters,
    input: &[f64],
    batch: usize,
    mode: BnMode,
    record: bool,
) -> Result<(Vec<f64>, Option<Tape>, BatchStats)> {
    if input.len() != batch * plan.input {
        return Err(SlpError::dims("input batch has the wrong size"));
    }
    if params.layers.len() != plan.layers.len() {
        return Err(SlpError::dims("parameters do not match the network spec"));
    }
    let n = plan.layers.len();
    let mut pass = Pass {
        plan,
        params,
        batch,
        mode,
        record,
        tapes: (0..n).map(|_| LayerTape::default()).collect(),
        stats: vec![None; n],
    };

    let mut cur = input.to_vec();
    for li in 0..plan.convs {
        cur = pass.layer(li, &cur)?;
    }
    if plan.branches > 0 {
        let flat = cur;
        let mut lasts = Vec::with_capacity(plan.branches);
        for b in 0..plan.branches {
            let mut outs: Vec<Vec<f64>> = Vec::with_capacity(plan.branch_len);
            for i in 0..plan.branch_len {
                let inp = if i == 0 { &flat } else { &outs[i - 1] };
                let mut o = pass.layer(plan.branch_layer(b, i), inp)?;
                for &(s, d) in &plan.links {
                    if d == i {
                        for (v, r) in o.iter_mut().zip(&outs[s]) {
                            *v += r;
                        }
                    }
                }
                outs.push(o);
            }
            lasts.push(outs.pop().expect("branch has layers"));
        }
        let w = plan.layers[plan.branch_layer(0, plan.branch_len - 1)].out;
        cur = Vec::with_capacity(batch * w * plan.branches);
        for r in 0..batch {
            for last in &lasts {
                cur.extend_from_slice(&last[r * w..(r + 1) * w]);
            }
        }
    }
    for li in plan.trunk_start()..n {
        cur = pass.layer(li, &cur)?;
    }
    let tape = record.then_some(Tape {
        batch,
        mode,
        layers: pass.tapes,
    });
    Ok((cur, tape, pass.stats))
}

/// Index of each layer's first tensor in the trainable list.
fn tensor_offsets(params: &NetworkParameters) -> Vec<usize> {
    let mut offs = Vec::with_capacity(params.layers.len());
    let mut at = 0;
    for l in &params.layers {
        offs.push(at);
        at += if l.bn.is_some() { 4 } else { 2 };
    }
    offs
}

struct Back<'a> {
    plan: &'a Plan,
    params: &'a NetworkParameters,
    tape: &'a Tape,
    grads: Gradients,
    offsets: Vec<usize>,
}

impl Back<'_> {
    /// Accumulates parameter gradients of layer `li` given the gradient of
    /// its output; returns the gradient of its input when `need_input`.
    fn layer(&mut self, li: usize, dy: &[f64], need_input: bool) -> Vec<f64> {
        let l = &self.plan.layers[li];
        let p = &self.params.layers[li];
        let t = &self.tape.layers[li];
        let rows = self.tape.batch * l.positions();
        let off = self.offsets[li];
        let mut dz = dy.to_vec();

        if l.hidden {
            if let Some(bn) = &p.bn {
                let (mut dgamma, mut dbeta) = (vec![0.0; l.out], vec![0.0; l.out]);
                for (r, x) in dz.chunks_exact(l.out).zip(t.xhat.chunks_exact(l.out)) {
                    for c in 0..l.out {
                        dgamma[c] += r[c] * x[c];
                        dbeta[c] += r[c];
                    }
                }
                // dxhat = dy · γ
                for r in dz.chunks_exact_mut(l.out) {
                    for (v, g) in r.iter_mut().zip(&bn.gamma) {
                        *v *= g;
                    }
                }
                match self.tape.mode {
                    BnMode::Batch => {
                        let (mut sum, mut dot) = (vec![0.0; l.out], vec![0.0; l.out]);
                        for (r, x) in dz.chunks_exact(l.out).zip(t.xhat.chunks_exact(l.out)) {
                            for c in 0..l.out {
                                sum[c] += r[c];
                                dot[c] += r[c] * x[c];
                            }
                        }
                        let n = rows as f64;
                        for (r, x) in dz.chunks_exact_mut(l.out).zip(t.xhat.chunks_exact(l.out)) {
                            for c in 0..l.out {
                                r[c] = t.inv_std[c] * (r[c] - sum[c] / n - x[c] * dot[c] / n);
                            }
                        }
                    }
                    BnMode::Running => {
                        for r in dz.chunks_exact_mut(l.out) {
                            for (v, s) in r.iter_mut().zip(&t.inv_std) {
                                *v *= s;
                            }
                        }
                    }
                }
                add(&mut self.grads[off + 2], &dgamma);
                add(&mut self.grads[off + 3], &dbeta);
            }
            if self.plan.activation == Activation::Relu {
                for (v, z) in dz.iter_mut().zip(&t.pre) {
                    if *z <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }

        matmul_at_b_acc(l.fan_in, rows, l.out, &t.input, &dz, &mut self.grads[off]);
        let db = &mut self.grads[off + 1];
        for r in dz.chunks_exact(l.out) {
            for (g, v) in db.iter_mut().zip(r) {
                *g += v;
            }
        }
        if !need_input {
            return Vec::new();
        }
        let mut da = vec![0.0; rows * l.fan_in];
        matmul_a_bt(rows, l.out, l.fan_in, &dz, &p.weight, &mut da);
        match &l.kind {
            Kind::Conv(g) if !g.is_pointwise() => col2im(g, self.tape.batch, &da),
            _ => da,
        }
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Parameter gradients given the gradient of the raw output.
pub(crate) fn backward(plan: &Plan, params: &NetworkParameters, tape: &Tape, d_out: &[f64]) -> Gradients {
    let grads = params.trainable().iter().map(|t| vec![0.0; t.len()]).collect();
    let mut back = Back {
        plan,
        params,
        tape,
        grads,
        offsets: tensor_offsets(params),
    };
    let n = plan.layers.len();
    let batch = tape.batch;

    let mut g = d_out.to_vec();
    for li in (plan.trunk_start()..n).rev() {
        let first = li == 0;
        g = back.layer(li, &g, !first);
    }
    if plan.branches > 0 {
        let w = plan.layers[plan.branch_layer(0, plan.branch_len - 1)].out;
        let flat_len = batch * plan.layers[plan.branch_layer(0, 0)].fan_in;
        let mut g_flat = vec![0.0; flat_len];
        for b in 0..plan.branches {
            let mut gs: Vec<Vec<f64>> = (0..plan.branch_len)
                .map(|i| vec![0.0; batch * plan.layers[plan.branch_layer(b, i)].out])
                .collect();
            for r in 0..batch {
                let src = &g[(r * plan.branches + b) * w..(r * plan.branches + b + 1) * w];
                gs[plan.branch_len - 1][r * w..(r + 1) * w].copy_from_slice(src);
            }
            for i in (0..plan.branch_len).rev() {
                let gi = std::mem::take(&mut gs[i]);
                for &(s, d) in &plan.links {
                    if d == i {
                        add(&mut gs[s], &gi);
                    }
                }
                let li = plan.branch_layer(b, i);
                let need = i > 0 || li > 0;
                let din = back.layer(li, &gi, need);
                if i > 0 {
                    add(&mut gs[i - 1], &din);
                } else if need {
                    add(&mut g_flat, &din);
                }
            }
        }
        g = g_flat;
    }
    for li in (0..plan.convs).rev() {
        g = back.layer(li, &g, li > 0);
    }
    back.grads
}

/// Folds batch statistics into the running averages,
/// `running = momentum · running + (1 - momentum) · batch`.
pub(crate) fn update_running(params: &mut NetworkParameters, stats: &BatchStats, momentum: f64) {
    for (l, s) in params.layers.iter_mut().zip(stats) {
        if let (Some(bn), Some((mean, var))) = (&mut l.bn, s) {
            for (r, m) in bn.running_mean.iter_mut().zip(mean) {
                *r = momentum * *r + (1.0 - momentum) * m;
            }
            for (r, v) in bn.running_var.iter_mut().zip(var) {
                *r = momentum * *r + (1.0 - momentum) * v;
            }
        }
    }
}
