//! Learned precoder: a convolutional/dense network mapping a channel to the
//! reduced precoding matrix, trained either directly on the QoS margins
//! (unsupervised) or against solver labels (supervised).
//!
//! Everything is `f64` with hand-written backpropagation. The input is the
//! raw channel; only `H` enters the network, the symbol vectors are fixed by
//! the reduced set.

mod adam;
mod checkpoint;
mod head;
mod kernels;
mod network;
mod params;
mod spec;
mod train;

pub use adam::{adam_step, learning_rate, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, TrainingState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use head::{output_to_matrix, scale_precoder, supervised_loss, unsupervised_loss};
pub use network::{BatchStats, BnMode};
pub use params::{BatchNorm, Gradients, LayerParams, NetworkParameters};
pub use spec::{Activation, ConvSpec, NetworkSpec, Scaling};
pub use train::{train, EpochRecord, TrainConfig, TrainMode, TrainReport, Trainer, TrainingData, BN_MOMENTUM};

use crate::error::{Result, SlpError};
use crate::matrix::{ChannelMatrix, PrecodingMatrix};

/// The loss a gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Unsupervised { lambda: f64 },
    Supervised,
}

/// Batch loss, its gradient and the batch normalization statistics seen.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub gradients: Gradients,
    pub stats: BatchStats,
}

fn check_channels(spec: &NetworkSpec, channels: &[&ChannelMatrix]) -> Result<()> {
    if channels.is_empty() {
        return Err(SlpError::arg("batch must not be empty"));
    }
    for h in channels {
        if h.users() != spec.users || h.antennas() != spec.antennas {
            return Err(SlpError::dims(format!(
                "channel is {}x{}, network expects {}x{}",
                h.users(),
                h.antennas(),
                spec.users,
                spec.antennas
            )));
        }
    }
    Ok(())
}

/// Forward pass on a batch, returning scaled precoders.
pub fn forward_batch(
    params: &NetworkParameters,
    spec: &NetworkSpec,
    channels: &[&ChannelMatrix],
    mode: BnMode,
) -> Result<Vec<PrecodingMatrix>> {
    check_channels(spec, channels)?;
    let plan = spec.plan()?;
    let n_par = spec.n_par()?;
    let q = spec.power_budget * n_par as f64;
    let input = network::encode_inputs(channels);
    let (out, _, _) = network::forward_batch(&plan, params, &input, channels.len(), mode, false)?;
    out.chunks_exact(plan.output)
        .map(|o| head::output_to_matrix(&head::scale_forward(o, q, spec.scaling), spec.antennas, n_par))
        .collect()
}

/// Forward pass on one channel.
pub fn forward(params: &NetworkParameters, spec: &NetworkSpec, h: &ChannelMatrix, mode: BnMode) -> Result<PrecodingMatrix> {
    Ok(forward_batch(params, spec, &[h], mode)?.remove(0))
}

/// Inference with the running normalization statistics. The result always
/// satisfies the power budget.
pub fn infer(params: &NetworkParameters, spec: &NetworkSpec, h: &ChannelMatrix) -> Result<PrecodingMatrix> {
    forward(params, spec, h, BnMode::Running)
}

/// Batch loss (mean over samples) and its exact gradient.
///
/// Subgradient conventions: `|Im z|` has slope 0 at 0, ReLU has slope 0 at
/// 0, and the literal scaling uses its `‖X_temp‖_F` branch at the tie.
pub fn gradient(
    params: &NetworkParameters,
    spec: &NetworkSpec,
    channels: &[&ChannelMatrix],
    labels: Option<&[&PrecodingMatrix]>,
    objective: Objective,
    mode: BnMode,
) -> Result<Evaluation> {
    evaluate(params, spec, channels, labels, objective, mode, true)
}

/// Batch loss without the gradient.
pub fn batch_loss(
    params: &NetworkParameters,
    spec: &NetworkSpec,
    channels: &[&ChannelMatrix],
    labels: Option<&[&PrecodingMatrix]>,
    objective: Objective,
    mode: BnMode,
) -> Result<f64> {
    Ok(evaluate(params, spec, channels, labels, objective, mode, false)?.loss)
}

fn evaluate(
    params: &NetworkParameters,
    spec: &NetworkSpec,
    channels: &[&ChannelMatrix],
    labels: Option<&[&PrecodingMatrix]>,
    objective: Objective,
    mode: BnMode,
    want_grad: bool,
) -> Result<Evaluation> {
    check_channels(spec, channels)?;
    let plan = spec.plan()?;
    let c = spec.constellation()?;
    let n_par = c.reduced_count(spec.users)?;
    let q = spec.power_budget * n_par as f64;
    let batch = channels.len();

    let label_vecs = match (objective, labels) {
        (Objective::Supervised, None) => return Err(SlpError::arg("supervised loss needs labels")),
        (Objective::Supervised, Some(l)) => {
            if l.len() != batch {
                return Err(SlpError::dims("label count differs from batch size"));
            }
            let mut v = Vec::with_capacity(batch);
            for x in l {
                if x.antennas() != spec.antennas || x.columns() != n_par {
                    return Err(SlpError::dims("label shape does not match the network output"));
                }
                v.push(head::matrix_to_vec(x));
            }
            v
        }
        (Objective::Unsupervised { lambda }, _) => {
            if !(lambda > 0.0) {
                return Err(SlpError::arg("regularization factor must be positive"));
            }
            Vec::new()
        }
    };
    let angles = head::reduced_angles(&c, spec.users)?;

    let input = network::encode_inputs(channels);
    let (out, tape, stats) = network::forward_batch(&plan, params, &input, batch, mode, want_grad)?;
    let weight = 1.0 / batch as f64;
    let mut d_out = vec![0.0; out.len()];
    let mut loss = 0.0;
    let mut g_x = vec![0.0; plan.output];
    for (i, (o, d)) in out.chunks_exact(plan.output).zip(d_out.chunks_exact_mut(plan.output)).enumerate() {
        let x = head::scale_forward(o, q, spec.scaling);
        g_x.fill(0.0);
        loss += weight
            * match objective {
                Objective::Unsupervised { lambda } => {
                    head::unsupervised_sample(&x, channels[i], &angles, c.half_angle(), lambda, weight, &mut g_x)
                }
                Objective::Supervised => head::supervised_sample(&x, &label_vecs[i], weight, &mut g_x),
            };
        head::scale_backward(o, &g_x, q, spec.scaling, d);
    }
    if !loss.is_finite() {
        return Err(SlpError::NonFinite { layer: "loss".into() });
    }
    let gradients = match tape {
        Some(t) => network::backward(&plan, params, &t, &d_out),
        None => Vec::new(),
    };
    Ok(Evaluation { loss, gradients, stats })
}

/// A spec together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: NetworkParameters,
}

impl Network {
    pub fn new(spec: NetworkSpec, params: NetworkParameters) -> Result<Self> {
        let fresh = NetworkParameters::init(&spec, 0)?;
        let shapes = |p: &NetworkParameters| p.tensors().iter().map(|t| t.len()).collect::<Vec<_>>();
        let same_bn = fresh.layers.iter().zip(&params.layers).all(|(a, b)| a.bn.is_some() == b.bn.is_some());
        if fresh.layers.len() != params.layers.len() || !same_bn || shapes(&fresh) != shapes(&params) {
            return Err(SlpError::dims("parameters do not match the network spec"));
        }
        Ok(Self { spec, params })
    }

    pub fn random(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let params = NetworkParameters::init(&spec, seed)?;
        Ok(Self { spec, params })
    }

    pub fn infer(&self, h: &ChannelMatrix) -> Result<PrecodingMatrix> {
        infer(&self.params, &self.spec, h)
    }
}
