//! Per-column subproblem: maximize `min_i a_i · y` over the unit ball,
//! where `y = [Re x; Im x]` and the `a_i` are the two linearizations of each
//! user's margin.

use num_complex::Complex64;

use crate::constellation::{Constellation, SymbolVector};
use crate::matrix::ChannelMatrix;

pub(super) struct ColumnConstraints {
    pub(super) dim: usize,
    /// `2K` rows of length `dim`, row-major.
    pub(super) rows: Vec<f64>,
    /// Matched-filter direction `Σ_k h_k e^{jθ_k}` in real form.
    matched: Vec<f64>,
}

pub(super) struct ColumnSolution {
    /// Unit-norm maximizer (zero if none was found).
    pub direction: Vec<f64>,
    /// `min_i a_i · direction`: an attained value.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(super) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl ColumnConstraints {
    pub fn new(h: &ChannelMatrix, c: &Constellation, s: &SymbolVector) -> Self {
        let n_t = h.antennas();
        let dim = 2 * n_t;
        let (sin, cos) = c.half_angle().sin_cos();
        let mut rows = Vec::with_capacity(2 * h.users() * dim);
        let mut matched = vec![0.0; dim];
        for k in 0..h.users() {
            let rot = Complex64::from_polar(1.0, -c.symbol_angle(s.get(k)));
            let coef: Vec<Complex64> = (0..n_t).map(|n| h.get(k, n) * rot).collect();
            // Re z = [Re c, -Im c]·y, Im z = [Im c, Re c]·y
            for sign in [1.0, -1.0] {
                for cn in &coef {
                    rows.push(sin * cn.re - sign * cos * cn.im);
                }
                for cn in &coef {
                    rows.push(-sin * cn.im - sign * cos * cn.re);
                }
            }
            // h_k e^{jθ} = conj(row_k e^{-jθ})
            for (n, cn) in coef.iter().enumerate() {
                matched[n] += cn.re;
                matched[n + n_t] -= cn.im;
            }
        }
        Self { dim, rows, matched }
    }

    pub(super) fn count(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub(super) fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn matched_filter_start(&self) -> Vec<f64> {
        self.matched.clone()
    }

    pub(super) fn values(&self, y: &[f64], out: &mut [f64]) {
        for (i, v) in out.iter_mut().enumerate() {
            *v = dot(self.row(i), y);
        }
    }

    /// Worst margin of a unit-normalized `y`.
    pub(super) fn attained(&self, y: &[f64]) -> f64 {
        let n = norm(y);
        if n == 0.0 {
            return 0.0;
        }
        (0..self.count())
            .map(|i| dot(self.row(i), y) / n)
            .fold(f64::INFINITY, f64::min)
    }
}
