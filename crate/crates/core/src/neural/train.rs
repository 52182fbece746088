//! Mini-batch training with a deterministic shuffle and resumable state.

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, learning_rate, AdamState};
use super::checkpoint::{Checkpoint, TrainingState};
use super::network::{update_running, BnMode};
use super::params::NetworkParameters;
use super::spec::NetworkSpec;
use super::{gradient, Objective};
use crate::channel::rng::{domain, Substream};
use crate::channel::Dataset;
use crate::error::{Result, SlpError};
use crate::matrix::{ChannelMatrix, PrecodingMatrix};

/// Weight of the old value in the running normalization statistics.
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Unsupervised,
    Supervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Regularization factor `λ` of the unsupervised loss.
    pub lambda_reg: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Seeds both the initialization and the per-epoch shuffles.
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay_factor: 0.1,
            decay_every: 20,
            epochs: 60,
            batch_size: 1024,
            lambda_reg: 0.2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            mode: TrainMode::Unsupervised,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SlpError::arg(format!("{name} must be positive")))
            }
        };
        pos(self.learning_rate, "learning_rate")?;
        pos(self.lambda_reg, "lambda_reg")?;
        pos(self.adam_epsilon, "adam_epsilon")?;
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(SlpError::arg("decay_factor must be in (0, 1]"));
        }
        for (b, name) in [(self.adam_beta1, "adam_beta1"), (self.adam_beta2, "adam_beta2")] {
            if !(b > 0.0 && b < 1.0) {
                return Err(SlpError::arg(format!("{name} must be in (0, 1)")));
            }
        }
        if self.decay_every == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(SlpError::arg("decay_every, epochs and batch_size must be at least 1"));
        }
        Ok(())
    }

    fn objective(&self) -> Objective {
        match self.mode {
            TrainMode::Unsupervised => Objective::Unsupervised { lambda: self.lambda_reg },
            TrainMode::Supervised => Objective::Supervised,
        }
    }
}

/// Channels plus, for supervised training, one label per channel.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub channels: &'a Dataset,
    pub labels: Option<&'a [PrecodingMatrix]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Parameters after the last finite epoch.
    pub params: NetworkParameters,
    pub trace: Vec<EpochRecord>,
    /// Epoch (1-based) at which a non-finite loss stopped training.
    pub diverged_at: Option<usize>,
}

pub struct Trainer {
    spec: NetworkSpec,
    cfg: TrainConfig,
    params: NetworkParameters,
    adam: AdamState,
    trace: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(spec: NetworkSpec, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = NetworkParameters::init(&spec, cfg.seed)?;
        let adam = AdamState::new(&params);
        Ok(Self {
            spec,
            cfg,
            params,
            adam,
            trace: Vec::new(),
        })
    }

    /// Continues from a checkpoint with optimizer state. `cfg.epochs` is the
    /// total epoch count, including those already done.
    pub fn resume(ckpt: Checkpoint, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let state = ckpt
            .training
            .ok_or_else(|| SlpError::arg("checkpoint has no optimizer state to resume from"))?;
        if state.trace.len() != state.epoch {
            return Err(SlpError::arg("checkpoint trace length disagrees with its epoch"));
        }
        Ok(Self {
            spec: ckpt.spec,
            cfg,
            params: ckpt.params,
            adam: state.adam,
            trace: state.trace,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &NetworkParameters {
        &self.params
    }

    pub fn trace(&self) -> &[EpochRecord] {
        &self.trace
    }

    pub fn epochs_done(&self) -> usize {
        self.trace.len()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec: self.spec.clone(),
            params: self.params.clone(),
            training: Some(TrainingState {
                epoch: self.trace.len(),
                adam: self.adam.clone(),
                trace: self.trace.clone(),
            }),
        }
    }

    fn check_data(&self, data: &TrainingData) -> Result<()> {
        let d = data.channels;
        if d.is_empty() {
            return Err(SlpError::arg("training set is empty"));
        }
        if d.users() != self.spec.users || d.antennas() != self.spec.antennas {
            return Err(SlpError::dims("dataset dimensions do not match the network"));
        }
        match (self.cfg.mode, data.labels) {
            (TrainMode::Supervised, None) => Err(SlpError::arg("supervised training needs labels")),
            (TrainMode::Supervised, Some(l)) if l.len() != d.len() => {
                Err(SlpError::dims(format!("{} labels for {} channels", l.len(), d.len())))
            }
            _ => Ok(()),
        }
    }

    /// One pass over the data. On a non-finite loss the parameters and
    /// optimizer roll back to the start of the epoch and an error is
    /// returned.
    pub fn run_epoch(&mut self, data: &TrainingData) -> Result<EpochRecord> {
        self.check_data(data)?;
        let epoch = self.trace.len();
        let n = data.channels.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = Substream::new(self.cfg.seed, domain::SHUFFLE, epoch as u64);
        for i in (1..n).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            order.swap(i, j);
        }

        let snapshot = (self.params.clone(), self.adam.clone());
        let objective = self.cfg.objective();
        let mut total = 0.0;
        let result = (|| {
            for idx in order.chunks(self.cfg.batch_size) {
                let channels: Vec<&ChannelMatrix> = idx.iter().map(|&i| &data.channels.channels()[i]).collect();
                let labels: Option<Vec<&PrecodingMatrix>> = data.labels.map(|l| idx.iter().map(|&i| &l[i]).collect());
                let eval = gradient(&self.params, &self.spec, &channels, labels.as_deref(), objective, BnMode::Batch)?;
                adam_step(&mut self.params, &eval.gradients, &mut self.adam, &self.cfg, epoch);
                update_running(&mut self.params, &eval.stats, BN_MOMENTUM);
                total += eval.loss * idx.len() as f64;
            }
            if !self.params.is_finite() || !total.is_finite() {
                return Err(SlpError::NonFinite { layer: "parameters".into() });
            }
            Ok(())
        })();
        if let Err(e) = result {
            (self.params, self.adam) = snapshot;
            return Err(e);
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: total / n as f64,
            learning_rate: learning_rate(&self.cfg, epoch),
        };
        self.trace.push(record);
        Ok(record)
    }

    /// Trains until `cfg.epochs` epochs are done, calling `on_epoch` after
    /// each. Divergence stops training and is reported, not raised.
    pub fn fit(&mut self, data: &TrainingData, mut on_epoch: impl FnMut(&Self, &EpochRecord)) -> Result<TrainReport> {
        let mut diverged_at = None;
        while self.trace.len() < self.cfg.epochs {
            match self.run_epoch(data) {
                Ok(r) => on_epoch(self, &r),
                Err(e) if e.is_numerical() => {
                    diverged_at = Some(self.trace.len() + 1);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(TrainReport {
            params: self.params.clone(),
            trace: self.trace.clone(),
            diverged_at,
        })
    }
}

/// Trains a freshly initialized network.
pub fn train(data: &TrainingData, spec: &NetworkSpec, cfg: &TrainConfig) -> Result<TrainReport> {
    Trainer::new(spec.clone(), *cfg)?.fit(data, |_, _| {})
}
