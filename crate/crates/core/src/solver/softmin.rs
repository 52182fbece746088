//! Annealed softmin ascent for the per-column subproblem.

use super::column::{dot, norm, ColumnConstraints, ColumnSolution};
use super::SolveConfig;

/// Temperature divisor between annealing rounds.
const ANNEAL: f64 = 8.0;
const POLISH_ITERS: usize = 500;

impl ColumnConstraints {
    /// Softmin value `-τ log Σ exp(-v_i/τ)`, with the softmax weights written
    /// to `w`.
    fn smooth(&self, y: &[f64], tau: f64, v: &mut [f64], w: &mut [f64]) -> f64 {
        self.values(y, v);
        let m = v.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (wi, vi) in w.iter_mut().zip(v.iter()) {
            *wi = (-(vi - m) / tau).exp();
            total += *wi;
        }
        for wi in w.iter_mut() {
            *wi /= total;
        }
        m - tau * total.ln()
    }

    fn weighted_sum(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, wi) in w.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += wi * a;
            }
        }
    }

    /// Annealed softmin ascent with backtracking, certified by the dual
    /// bound `‖Σ w_i a_i‖ ≥ t*` for any simplex weights `w`.
    pub fn maximize_softmin(&self, start: Vec<f64>, cfg: &SolveConfig) -> ColumnSolution {
        let dim = self.dim;
        let scale = (0..self.count()).map(|i| norm(self.row(i))).fold(0.0, f64::max);
        if scale == 0.0 {
            return ColumnSolution {
                direction: vec![0.0; dim],
                value: 0.0,
                converged: true,
                iterations: 0,
            };
        }

        let mut y = start;
        let n0 = norm(&y);
        if n0 > 0.0 && n0.is_finite() {
            y.iter_mut().for_each(|v| *v /= n0);
        } else {
            y = vec![0.0; dim];
            y[0] = 1.0;
        }

        let m = self.count();
        let (mut v, mut w, mut g) = (vec![0.0; m], vec![0.0; m], vec![0.0; dim]);
        let (mut v2, mut w2) = (vec![0.0; m], vec![0.0; m]);
        let mut cand = vec![0.0; dim];

        let mut best_value = self.attained(&y);
        let mut best = y.clone();
        let mut upper = f64::INFINITY;
        let mut tau = cfg.smoothing * scale;
        let mut step = tau / (scale * scale);
        let mut iterations = 0;

        let certified = |best: f64, upper: f64| upper - best <= cfg.tol * upper.max(cfg.tol * scale);

        'rounds: while iterations < cfg.max_iters {
            loop {
                let f = self.smooth(&y, tau, &mut v, &mut w);
                self.weighted_sum(&w, &mut g);
                upper = upper.min(norm(&g));
                if certified(best_value, upper) {
                    return ColumnSolution {
                        direction: best,
                        value: best_value,
                        converged: true,
                        iterations,
                    };
                }
                if iterations >= cfg.max_iters {
                    break 'rounds;
                }
                iterations += 1;

                // Backtracking on the projected step.
                let moved = loop {
                    for ((c, yi), gi) in cand.iter_mut().zip(&y).zip(&g) {
                        *c = yi + step * gi;
                    }
                    let n = norm(&cand);
                    if n > 1.0 {
                        cand.iter_mut().for_each(|c| *c /= n);
                    }
                    let f_new = self.smooth(&cand, tau, &mut v2, &mut w2);
                    let mut lin = 0.0;
                    let mut dist = 0.0;
                    for ((c, yi), gi) in cand.iter().zip(&y).zip(&g) {
                        lin += gi * (c - yi);
                        dist += (c - yi) * (c - yi);
                    }
                    if f_new >= f + lin - dist / (2.0 * step) - 1e-15 * f.abs() || step < 1e-300 {
                        step *= 2.0;
                        break dist.sqrt();
                    }
                    step *= 0.5;
                };
                std::mem::swap(&mut y, &mut cand);
                let a = self.attained(&y);
                if a > best_value {
                    best_value = a;
                    best.copy_from_slice(&y);
                    let n = norm(&best);
                    best.iter_mut().for_each(|b| *b /= n);
                }
                if moved <= 1e-3 * tau / scale {
                    break;
                }
            }
            tau /= ANNEAL;
            step /= ANNEAL;
        }

        // Polyak-type subgradient polish on the true minimum, aiming at the
        // best dual bound.
        let mut y = best.clone();
        for _ in 0..POLISH_ITERS {
            self.values(&y, &mut v);
            let (i, vmin) = v
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc });
            let a = self.row(i);
            let gap = upper - vmin;
            if gap <= 0.0 {
                break;
            }
            let s = gap / dot(a, a);
            for (yi, ai) in y.iter_mut().zip(a) {
                *yi += s * ai;
            }
            let n = norm(&y);
            if n > 1.0 {
                y.iter_mut().for_each(|c| *c /= n);
            }
            let val = self.attained(&y);
            if val > best_value {
                best_value = val;
                best.copy_from_slice(&y);
                let n = norm(&best);
                best.iter_mut().for_each(|b| *b /= n);
            }
        }
        ColumnSolution {
            direction: best,
            converged: certified(best_value, upper),
            value: best_value,
            iterations,
        }
    }
}
