//! Exact per-column solve through the dual.
//!
//! For `max_{‖y‖≤1} min_i a_i · y` the minimax theorem gives
//! `t* = min_{w ∈ simplex} ‖Σ w_i a_i‖`, the distance from the origin to the
//! convex hull of the `a_i`; the maximizer is that nearest point normalized.
//! Wolfe's minimum-norm-point algorithm finds it in finitely many steps.

use nalgebra::{DMatrix, DVector};

use super::column::{dot, ColumnConstraints, ColumnSolution};
use super::SolveConfig;

/// Weights at or below this are dropped from the corral.
const WEIGHT_EPS: f64 = 1e-14;
/// Relative optimality gap at which the major loop stops.
const STOP_GAP: f64 = 1e-13;

impl ColumnConstraints {
    pub fn maximize_min_norm(&self, cfg: &SolveConfig) -> ColumnSolution {
        let (dim, m) = (self.dim, self.count());
        let scale_sq = (0..m).map(|i| dot(self.row(i), self.row(i))).fold(0.0, f64::max);
        let zero = |converged, iterations| ColumnSolution {
            direction: vec![0.0; dim],
            value: 0.0,
            converged,
            iterations,
        };
        if scale_sq == 0.0 {
            return zero(true, 0);
        }

        let first = (0..m)
            .min_by(|&a, &b| dot(self.row(a), self.row(a)).total_cmp(&dot(self.row(b), self.row(b))))
            .expect("at least one constraint");
        let mut corral = vec![first];
        let mut weights = vec![1.0];
        let mut x = self.row(first).to_vec();
        let mut iterations = 0;

        loop {
            let xx = dot(&x, &x);
            if xx <= 1e-28 * scale_sq {
                // The origin is in the hull: no direction has a positive
                // worst margin, and y = 0 attains 0.
                return zero(true, iterations);
            }
            let (j, low) = (0..m)
                .map(|i| (i, dot(self.row(i), &x)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one constraint");
            let gap = (xx - low) / xx;
            if gap <= STOP_GAP || corral.contains(&j) || iterations >= cfg.max_iters {
                let n = xx.sqrt();
                let direction: Vec<f64> = x.iter().map(|v| v / n).collect();
                let value = self.attained(&direction);
                // ‖x‖ bounds t* from above.
                let converged = n - value <= cfg.tol * n;
                return ColumnSolution {
                    direction,
                    value,
                    converged,
                    iterations,
                };
            }
            corral.push(j);
            weights.push(0.0);

            // Minor cycles: move towards the affine minimizer of the corral
            // until it lies in the relative interior of its hull.
            loop {
                iterations += 1;
                let Some(alpha) = self.affine_minimizer(&corral) else {
                    // Affinely dependent corral; keep the current point.
                    break;
                };
                if alpha.iter().all(|&a| a > WEIGHT_EPS) {
                    weights = alpha;
                    break;
                }
                let theta = weights
                    .iter()
                    .zip(&alpha)
                    .filter(|(_, &a)| a <= WEIGHT_EPS)
                    .map(|(&w, &a)| w / (w - a))
                    .fold(1.0, f64::min);
                for (w, a) in weights.iter_mut().zip(&alpha) {
                    *w = (1.0 - theta) * *w + theta * a;
                }
                // Drop at least the blocking vertex.
                let drop = weights
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .expect("corral not empty");
                weights[drop] = 0.0;
                let mut kept = Vec::with_capacity(corral.len());
                let mut kept_w = Vec::with_capacity(corral.len());
                for (&c, &w) in corral.iter().zip(&weights) {
                    if w > WEIGHT_EPS {
                        kept.push(c);
                        kept_w.push(w);
                    }
                }
                let total: f64 = kept_w.iter().sum();
                kept_w.iter_mut().for_each(|w| *w /= total);
                corral = kept;
                weights = kept_w;
                if corral.len() <= 1 {
                    break;
                }
            }
            x.fill(0.0);
            for (&c, &w) in corral.iter().zip(&weights) {
                for (xv, a) in x.iter_mut().zip(self.row(c)) {
                    *xv += w * a;
                }
            }
        }
    }

    /// Weights `α` (summing to one) minimizing `‖Σ α_i a_{S_i}‖`, from the
    /// bordered Gram system `[G 1; 1ᵀ 0] [α; μ] = [0; 1]`.
    fn affine_minimizer(&self, corral: &[usize]) -> Option<Vec<f64>> {
        let s = corral.len();
        let mut sys = DMatrix::<f64>::zeros(s + 1, s + 1);
        for (i, &a) in corral.iter().enumerate() {
            for (j, &b) in corral.iter().enumerate() {
                sys[(i, j)] = dot(self.row(a), self.row(b));
            }
            sys[(i, s)] = 1.0;
            sys[(s, i)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(s + 1);
        rhs[s] = 1.0;
        let sol = sys.lu().solve(&rhs)?;
        let alpha: Vec<f64> = sol.iter().take(s).copied().collect();
        alpha.iter().all(|a| a.is_finite()).then_some(alpha)
    }
}
