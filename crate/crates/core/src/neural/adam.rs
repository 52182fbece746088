//! Adam with a step-decay learning-rate schedule.

use super::params::{Gradients, NetworkParameters};
use super::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    /// First moments, laid out like [`NetworkParameters::trainable`].
    pub m: Vec<Vec<f64>>,
    /// Second moments.
    pub v: Vec<Vec<f64>>,
    /// Updates taken so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParameters) -> Self {
        let zeros: Vec<Vec<f64>> = params.trainable().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// `η · α^⌊epoch / decay_every⌋`, with `epoch` counted from 0.
pub fn learning_rate(cfg: &TrainConfig, epoch: usize) -> f64 {
    let decays = (epoch / cfg.decay_every) as i32;
    cfg.learning_rate * cfg.decay_factor.powi(decays)
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut NetworkParameters,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
    epoch: usize,
) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let lr = learning_rate(cfg, epoch);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .trainable_mut()
        .into_iter()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= lr * mhat / (vhat.sqrt() + cfg.adam_epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::NetworkSpec;

    fn setup() -> (NetworkParameters, AdamState, TrainConfig) {
        let spec = NetworkSpec::narrowed(2, 2, 4, 1.0, 256);
        let p = NetworkParameters::init(&spec, 1).unwrap();
        let s = AdamState::new(&p);
        (p, s, TrainConfig::default())
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut p, mut s, cfg) = setup();
        let before = p.clone();
        let ones: Gradients = p.trainable().iter().map(|t| vec![1.0; t.len()]).collect();
        adam_step(&mut p, &ones, &mut s, &cfg, 0);
        for (a, b) in p.trainable().iter().zip(before.trainable()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(((x - y) + cfg.learning_rate).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (mut p, mut s, cfg) = setup();
        let before = p.clone();
        let zeros: Gradients = p.trainable().iter().map(|t| vec![0.0; t.len()]).collect();
        adam_step(&mut p, &zeros, &mut s, &cfg, 0);
        assert_eq!(p, before);
    }

    #[test]
    fn schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(learning_rate(&cfg, 0), 1e-3);
        assert_eq!(learning_rate(&cfg, 19), 1e-3);
        assert!((learning_rate(&cfg, 20) - 1e-4).abs() < 1e-18);
        assert!((learning_rate(&cfg, 40) - 1e-5).abs() < 1e-19);
    }
}
