//! Parameter storage and initialization.

use crate::channel::rng::{domain, Substream};
use crate::error::Result;

use super::spec::{Activation, NetworkSpec, Plan};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Weights of one layer. `weight` is `fan_in × out`, row-major; for a
/// convolution the rows run over (kernel row, kernel column, input channel).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    pub layers: Vec<LayerParams>,
}

impl NetworkParameters {
    /// Fan-in scaled uniform weights, zero biases, identity normalization.
    ///
    /// Hidden ReLU layers draw from `U(±sqrt(6/fan_in))`, linear ones from
    /// `U(±sqrt(3/fan_in))`. Layer `i` uses its own random substream.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let plan = spec.plan()?;
        Ok(Self::init_plan(&plan, seed))
    }

    pub(crate) fn init_plan(plan: &Plan, seed: u64) -> Self {
        let layers = plan
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let gain = if l.hidden && plan.activation == Activation::Relu { 6.0 } else { 3.0 };
                let limit = (gain / l.fan_in as f64).sqrt();
                let mut rng = Substream::new(seed, domain::INIT, i as u64);
                let weight = (0..l.fan_in * l.out)
                    .map(|_| (2.0 * rng.uniform() - 1.0) * limit)
                    .collect();
                LayerParams {
                    weight,
                    bias: vec![0.0; l.out],
                    bn: plan.has_bn(i).then(|| BatchNorm {
                        gamma: vec![1.0; l.out],
                        beta: vec![0.0; l.out],
                        running_mean: vec![0.0; l.out],
                        running_var: vec![1.0; l.out],
                    }),
                }
            })
            .collect();
        Self { layers }
    }

    /// Every parameter set to zero, normalization statistics included.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let mut p = Self::init(spec, 0)?;
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        for bn in p.layers.iter_mut().filter_map(|l| l.bn.as_mut()) {
            bn.running_var.fill(1.0);
        }
        Ok(p)
    }

    /// Trainable tensors in declaration order: per layer weight, bias, and
    /// the normalization scale and shift.
    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
            if let Some(bn) = &l.bn {
                out.push(bn.gamma.as_slice());
                out.push(bn.beta.as_slice());
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    /// All tensors, running statistics included, in checkpoint order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
            if let Some(bn) = &l.bn {
                out.extend([&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var].map(Vec::as_slice));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
                out.push(&mut bn.running_mean);
                out.push(&mut bn.running_var);
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Gradient with the layout of [`NetworkParameters::trainable`].
pub type Gradients = Vec<Vec<f64>>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = NetworkSpec::narrowed(2, 2, 4, 1.0, 64);
        let a = NetworkParameters::init(&spec, 5).unwrap();
        assert_eq!(a, NetworkParameters::init(&spec, 5).unwrap());
        assert_ne!(a, NetworkParameters::init(&spec, 6).unwrap());
        let plan = spec.plan().unwrap();
        for (l, p) in plan.layers.iter().zip(&a.layers) {
            let limit = (6.0 / l.fan_in as f64).sqrt();
            assert!(p.weight.iter().all(|w| w.abs() <= limit));
            assert_eq!(p.bn.is_some(), l.hidden);
        }
        assert_eq!(a.trainable().len(), 4 * (plan.layers.len() - 1) + 2);
    }
}
