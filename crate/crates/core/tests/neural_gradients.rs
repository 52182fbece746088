//! Analytic gradients against central finite differences.

use slp_core::channel::rng::Substream;
use slp_core::channel::sample_rayleigh;
use slp_core::matrix::{ChannelMatrix, PrecodingMatrix};
use slp_core::neural::{batch_loss, gradient, BnMode, ConvSpec, NetworkParameters, NetworkSpec, Objective, Scaling};
use slp_core::Complex64;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;
const BATCH: usize = 16;

fn tiny_spec(power_budget: f64, scaling: Scaling) -> NetworkSpec {
    NetworkSpec {
        users: 2,
        antennas: 3,
        order: 4,
        power_budget,
        conv_layers: vec![
            ConvSpec {
                filters: 3,
                kernel: (2, 1),
                stride: (2, 1),
            },
            ConvSpec {
                filters: 4,
                kernel: (1, 2),
                stride: (1, 1),
            },
        ],
        branches: 2,
        branch_widths: vec![6, 5, 6],
        residual_links: vec![(0, 2)],
        trunk_widths: vec![7],
        activation: Default::default(),
        batch_norm: true,
        scaling,
    }
}

/// Initialized weights with random biases and normalization parameters, so
/// no ReLU input sits exactly on its kink and unit activity is mixed across
/// the batch (otherwise some bias gradients vanish below the
/// finite-difference noise floor).
fn random_params(spec: &NetworkSpec, seed: u64) -> NetworkParameters {
    let mut p = NetworkParameters::init(spec, seed).unwrap();
    let mut rng = Substream::new(seed, 77, 0);
    for l in &mut p.layers {
        for b in &mut l.bias {
            *b = 0.1 * rng.normal_pair().0;
        }
        if let Some(bn) = &mut l.bn {
            for (g, b) in bn.gamma.iter_mut().zip(&mut bn.beta) {
                *g = 1.0 + 0.3 * rng.normal_pair().0;
                *b = 0.3 * rng.normal_pair().0;
            }
            for (m, v) in bn.running_mean.iter_mut().zip(&mut bn.running_var) {
                *m = 0.3 * rng.normal_pair().0;
                *v = 0.5 + rng.uniform();
            }
        }
    }
    p
}

fn labels(spec: &NetworkSpec, n: usize) -> Vec<PrecodingMatrix> {
    let mut rng = Substream::new(3, 78, 0);
    let n_par = spec.n_par().unwrap();
    (0..n)
        .map(|_| {
            let e: Vec<Complex64> = (0..spec.antennas * n_par).map(|_| rng.complex_normal(0.5)).collect();
            PrecodingMatrix::from_column_major(spec.antennas, n_par, &e).unwrap()
        })
        .collect()
}

/// Largest per-tensor relative error `‖g - g_fd‖ / ‖g_fd‖` over all tensors.
fn worst_relative_error(spec: &NetworkSpec, objective: Objective, mode: BnMode) -> f64 {
    let params = random_params(spec, 11);
    let data = sample_rayleigh(spec.users, spec.antennas, BATCH, 9).unwrap();
    let channels: Vec<&ChannelMatrix> = data.channels().iter().collect();
    let label_store = labels(spec, channels.len());
    let label_refs: Vec<&PrecodingMatrix> = label_store.iter().collect();
    let labels = Some(label_refs.as_slice());

    let eval = gradient(&params, spec, &channels, labels, objective, mode).unwrap();
    let mut worst: f64 = 0.0;
    for (ti, analytic) in eval.gradients.iter().enumerate() {
        let mut fd = vec![0.0; analytic.len()];
        for (i, slot) in fd.iter_mut().enumerate() {
            let loss_at = |delta: f64| {
                let mut p = params.clone();
                p.trainable_mut()[ti][i] += delta;
                batch_loss(&p, spec, &channels, labels, objective, mode).unwrap()
            };
            *slot = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
        }
        let diff: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        let rel = if scale > 0.0 { diff / scale } else { diff };
        assert!(rel <= TOL, "tensor {ti}: relative error {rel:e}");
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn unsupervised_literal_scaling_below_budget() {
    // P·N_par = 40 exceeds the raw output norm: the sqrt(r) branch.
    let w = worst_relative_error(&tiny_spec(10.0, Scaling::Literal), Objective::Unsupervised { lambda: 0.2 }, BnMode::Batch);
    println!("worst relative error {w:e}");
}

#[test]
fn unsupervised_literal_scaling_above_budget() {
    let w = worst_relative_error(&tiny_spec(0.05, Scaling::Literal), Objective::Unsupervised { lambda: 0.2 }, BnMode::Batch);
    println!("worst relative error {w:e}");
}

#[test]
fn supervised_ball_projection() {
    let w = worst_relative_error(&tiny_spec(0.05, Scaling::BallProjection), Objective::Supervised, BnMode::Batch);
    println!("worst relative error {w:e}");
}

#[test]
fn supervised_running_statistics() {
    let w = worst_relative_error(&tiny_spec(1.0, Scaling::Literal), Objective::Supervised, BnMode::Running);
    println!("worst relative error {w:e}");
}
