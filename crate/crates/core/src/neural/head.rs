//! Output reshaping, power scaling and the two training losses.
//!
//! Internally a precoder is a real vector of length `2·N_t·N_par`: the real
//! parts of `X` in column-major order followed by the imaginary parts.

use num_complex::Complex64;

use super::spec::Scaling;
use crate::constellation::{enumerate_reduced_symbol_vectors, margin, qos_matrix, Constellation};
use crate::error::{Result, SlpError};
use crate::matrix::{ChannelMatrix, PrecodingMatrix};

/// Reshapes a network output into the complex `N_t × N_par` matrix.
pub fn output_to_matrix(o: &[f64], antennas: usize, n_par: usize) -> Result<PrecodingMatrix> {
    let n = antennas * n_par;
    if o.len() != 2 * n {
        return Err(SlpError::dims(format!("output length {} is not 2·{antennas}·{n_par}", o.len())));
    }
    let entries: Vec<Complex64> = (0..n).map(|i| Complex64::new(o[i], o[n + i])).collect();
    PrecodingMatrix::from_column_major(antennas, n_par, &entries)
}

pub(crate) fn matrix_to_vec(x: &PrecodingMatrix) -> Vec<f64> {
    let cm = x.column_major();
    cm.iter().map(|c| c.re).chain(cm.iter().map(|c| c.im)).collect()
}

/// `(s(r), s'(r))` such that the scaled output is `s(r) · X_temp` with
/// `r = ‖X_temp‖_F` and `q = P·N_par`.
fn scale_factor(r: f64, q: f64, mode: Scaling) -> (f64, f64) {
    if r == 0.0 {
        return (0.0, 0.0);
    }
    match mode {
        // At r = q the first argument of min is used.
        Scaling::Literal if r <= q => (r.powf(-0.5), -0.5 * r.powf(-1.5)),
        Scaling::BallProjection if r * r <= q => (1.0, 0.0),
        _ => (q.sqrt() / r, -q.sqrt() / (r * r)),
    }
}

/// Applies the power-scaling stage to `X_temp` for a total budget `q`.
pub fn scale_precoder(x_temp: &PrecodingMatrix, q: f64, mode: Scaling) -> PrecodingMatrix {
    let (s, _) = scale_factor(x_temp.frobenius(), q, mode);
    x_temp.scaled(s)
}

pub(crate) fn scale_forward(o: &[f64], q: f64, mode: Scaling) -> Vec<f64> {
    let r = o.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (s, _) = scale_factor(r, q, mode);
    o.iter().map(|v| v * s).collect()
}

/// Gradient with respect to the unscaled output, given the gradient `g`
/// with respect to the scaled one.
pub(crate) fn scale_backward(o: &[f64], g: &[f64], q: f64, mode: Scaling, out: &mut [f64]) {
    let r = o.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (s, ds) = scale_factor(r, q, mode);
    let go: f64 = g.iter().zip(o).map(|(a, b)| a * b).sum();
    let radial = if r > 0.0 { ds * go / r } else { 0.0 };
    for ((d, gi), oi) in out.iter_mut().zip(g).zip(o) {
        *d = s * gi + radial * oi;
    }
}

/// `L = -ν + (1/λ)·mean((ν - d)²)` and `dL/dd`.
pub(crate) fn margin_loss(d: &[f64], lambda: f64, grad: &mut [f64]) -> f64 {
    let n = d.len() as f64;
    let nu = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (nu - v) * (nu - v)).sum::<f64>() / n;
    for (g, v) in grad.iter_mut().zip(d) {
        *g = -1.0 / n + 2.0 * (v - nu) / (lambda * n);
    }
    -nu + var / lambda
}

/// Unsupervised loss of one precoder on one channel over the reduced
/// symbol set.
pub fn unsupervised_loss(x_hat: &PrecodingMatrix, h: &ChannelMatrix, c: &Constellation, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(SlpError::arg("regularization factor must be positive"));
    }
    let symbols = enumerate_reduced_symbol_vectors(c, h.users())?;
    let q = qos_matrix(h, x_hat, &symbols, c)?;
    let mut scratch = vec![0.0; q.values().len()];
    Ok(margin_loss(q.values(), lambda, &mut scratch))
}

/// Mean of `|x̂ - x|²` over the complex entries.
pub fn supervised_loss(x_hat: &PrecodingMatrix, label: &PrecodingMatrix) -> Result<f64> {
    if x_hat.antennas() != label.antennas() || x_hat.columns() != label.columns() {
        return Err(SlpError::dims("prediction and label shapes differ"));
    }
    let n = (x_hat.antennas() * x_hat.columns()) as f64;
    Ok((x_hat.as_matrix() - label.as_matrix()).norm_squared() / n)
}

/// Symbol angles `θ_{k,l}` of the reduced set, indexed `[l][k]`.
pub(crate) fn reduced_angles(c: &Constellation, users: usize) -> Result<Vec<Vec<f64>>> {
    Ok(enumerate_reduced_symbol_vectors(c, users)?
        .iter()
        .map(|s| (0..users).map(|k| c.symbol_angle(s.get(k))).collect())
        .collect())
}

/// Unsupervised loss of one scaled precoder vector; adds `weight · dL/dx`
/// to `grad`.
pub(crate) fn unsupervised_sample(
    x: &[f64],
    h: &ChannelMatrix,
    angles: &[Vec<f64>],
    half_angle: f64,
    lambda: f64,
    weight: f64,
    grad: &mut [f64],
) -> f64 {
    let (k_users, n_t, n_par) = (h.users(), h.antennas(), angles.len());
    let n = n_t * n_par;
    let hm = h.as_matrix();
    let mut d = vec![0.0; k_users * n_par];
    let mut z = vec![Complex64::default(); k_users * n_par];
    for (l, ang) in angles.iter().enumerate() {
        for (k, &theta) in ang.iter().enumerate() {
            let mut y = Complex64::default();
            for t in 0..n_t {
                y += hm[(k, t)] * Complex64::new(x[l * n_t + t], x[n + l * n_t + t]);
            }
            z[l * k_users + k] = y;
            d[l * k_users + k] = margin(y, theta, half_angle);
        }
    }
    let mut dd = vec![0.0; d.len()];
    let loss = margin_loss(&d, lambda, &mut dd);
    let (sin, cos) = half_angle.sin_cos();
    for (l, ang) in angles.iter().enumerate() {
        for (k, &theta) in ang.iter().enumerate() {
            let i = l * k_users + k;
            let rot = Complex64::from_polar(1.0, -theta);
            let im = (z[i] * rot).im;
            let sgn = if im > 0.0 {
                1.0
            } else if im < 0.0 {
                -1.0
            } else {
                0.0
            };
            let gz = Complex64::new(sin, -sgn * cos) * (weight * dd[i]);
            for t in 0..n_t {
                let g = (hm[(k, t)] * rot).conj() * gz;
                grad[l * n_t + t] += g.re;
                grad[n + l * n_t + t] += g.im;
            }
        }
    }
    loss
}

/// Supervised loss of one precoder vector against a label vector; adds
/// `weight · dL/dx` to `grad`.
pub(crate) fn supervised_sample(x: &[f64], label: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
    let n = (x.len() / 2) as f64;
    let mut loss = 0.0;
    for ((g, a), b) in grad.iter_mut().zip(x).zip(label) {
        let e = a - b;
        loss += e * e;
        *g += weight * 2.0 * e / n;
    }
    loss / n
}
