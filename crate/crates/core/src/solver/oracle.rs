//! Bisection-feasibility reference solver.
//!
//! Works on the whole reduced matrix with the shared Frobenius budget and
//! complex arithmetic throughout, so it shares no numerical path with the
//! per-column solvers beyond margin evaluation. Each bisection step first
//! searches for a feasible point by projected subgradient steps and, if that
//! stalls, settles the question with a primal/dual certificate from a
//! row-action method.

use num_complex::Complex64;

use super::{check_inputs, finish, SolveConfig, SolveResult, SolveStatus};
use crate::channel::rng::{domain, Substream};
use crate::constellation::{margin, Constellation, SymbolVector};
use crate::error::Result;
use crate::matrix::{ChannelMatrix, PrecodingMatrix};

const OVERSHOOT: f64 = 2e-4;

struct Problem<'a> {
    h: &'a ChannelMatrix,
    angles: Vec<Vec<f64>>,
    half_angle: f64,
    budget: f64,
}

impl Problem<'_> {
    /// Per column, the most violated constraint `(t - d_{k,l}, k, received)`.
    fn worst_per_column(&self, x: &PrecodingMatrix, t: f64) -> Vec<(f64, usize, Complex64)> {
        let y = self.h.as_matrix() * x.as_matrix();
        self.angles
            .iter()
            .enumerate()
            .map(|(l, angles)| {
                let mut out = (f64::NEG_INFINITY, 0, Complex64::default());
                for (k, &theta) in angles.iter().enumerate() {
                    let viol = t - margin(y[(k, l)], theta, self.half_angle);
                    if viol > out.0 {
                        out = (viol, k, y[(k, l)]);
                    }
                }
                out
            })
            .collect()
    }

    /// Subgradient of `d_{k,l}` with respect to `x_l`, as a complex vector
    /// whose real/imaginary parts are the partials in `Re x`/`Im x`.
    fn margin_gradient(&self, k: usize, theta: f64, received: Complex64) -> Vec<Complex64> {
        let rot = Complex64::from_polar(1.0, -theta);
        let z = received * rot;
        let (s, c) = self.half_angle.sin_cos();
        let sgn = if z.im > 0.0 {
            1.0
        } else if z.im < 0.0 {
            -1.0
        } else {
            0.0
        };
        let factor = Complex64::new(s, -sgn * c);
        (0..self.h.antennas())
            .map(|n| (self.h.get(k, n) * rot).conj() * factor)
            .collect()
    }

    /// Tries to find `X` in the power ball with every margin `>= t`.
    ///
    /// Projected subgradient descent on `Σ_l max_k (t - d_{k,l})^+` with
    /// Polyak steps aimed slightly past `t`, each violated column stepping
    /// on its own worst constraint before the shared ball projection.
    fn feasible(&self, t: f64, start: PrecodingMatrix, max_iters: usize) -> Option<PrecodingMatrix> {
        let mut x = super::project_power(&start, self.budget);
        for _ in 0..max_iters {
            let worst = self.worst_per_column(&x, t);
            if worst.iter().all(|w| w.0 <= 0.0) {
                return Some(x);
            }
            for (l, &(viol, k, y)) in worst.iter().enumerate() {
                if viol <= 0.0 {
                    continue;
                }
                let g = self.margin_gradient(k, self.angles[l][k], y);
                let gn: f64 = g.iter().map(|v| v.norm_sqr()).sum();
                if gn == 0.0 {
                    return None;
                }
                let step = (viol + OVERSHOOT * t) / gn;
                let m = x.as_matrix_mut();
                for (n, gv) in g.iter().enumerate() {
                    m[(n, l)] += gv * step;
                }
            }
            x = super::project_power(&x, self.budget);
        }
        None
    }

    /// Linear pieces of every margin: `d_{k,l} >= t` holds iff
    /// `Re(u · x_l) >= t` for both rows `u` of user `k`, since the
    /// absolute value splits into two half-planes.
    fn halfspaces(&self) -> Vec<Vec<Vec<Complex64>>> {
        let (s, c) = self.half_angle.sin_cos();
        self.angles
            .iter()
            .map(|angles| {
                let mut rows = Vec::with_capacity(2 * angles.len());
                for (k, &theta) in angles.iter().enumerate() {
                    let rot = Complex64::from_polar(1.0, -theta);
                    for sign in [1.0, -1.0] {
                        let a = Complex64::new(s, sign * c);
                        rows.push((0..self.h.antennas()).map(|n| (a * rot * self.h.get(k, n)).conj()).collect());
                    }
                }
                rows
            })
            .collect()
    }

    /// Decides feasibility through the minimum-norm point of the margin
    /// polyhedron, computed by Hildreth's row-action method.
    ///
    /// Stops once either a feasible point inside the ball (a rescaled
    /// iterate) or a dual bound above the budget settles the question.
    /// Stays undecided, and reports infeasible, after `max_iters` sweeps.
    /// This complements the subgradient search near `t*`, where the
    /// feasible set is too thin for it to land inside.
    fn certify(&self, t: f64, max_iters: usize) -> Option<PrecodingMatrix> {
        let rows = self.halfspaces();
        let n_t = self.h.antennas();
        let mut x = vec![vec![Complex64::default(); n_t]; rows.len()];
        let mut lambda: Vec<Vec<f64>> = rows.iter().map(|r| vec![0.0; r.len()]).collect();
        let norms: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|u| u.iter().map(|v| v.norm_sqr()).sum()).collect())
            .collect();
        let dot = |u: &[Complex64], x: &[Complex64]| -> f64 { u.iter().zip(x).map(|(u, x)| (u.conj() * x).re).sum() };
        for _ in 0..max_iters {
            for (l, col) in rows.iter().enumerate() {
                for (i, u) in col.iter().enumerate() {
                    if norms[l][i] == 0.0 {
                        continue;
                    }
                    let delta = ((t - dot(u, &x[l])) / norms[l][i]).max(-lambda[l][i]);
                    lambda[l][i] += delta;
                    for (xv, uv) in x[l].iter_mut().zip(u) {
                        *xv += uv * delta;
                    }
                }
            }
            let sq: f64 = x.iter().flatten().map(|v| v.norm_sqr()).sum();
            let dual = 2.0 * t * lambda.iter().flatten().sum::<f64>() - sq;
            if dual > self.budget {
                return None;
            }
            let ratio = rows
                .iter()
                .zip(&x)
                .flat_map(|(col, xl)| col.iter().map(move |u| dot(u, xl) / t))
                .fold(f64::INFINITY, f64::min);
            if ratio > 0.0 && sq / (ratio * ratio) <= self.budget {
                // Margins are 1-homogeneous, so spend the whole budget.
                let scale = (self.budget / sq).sqrt();
                let entries: Vec<Complex64> = x.iter().flatten().map(|v| v * scale).collect();
                let out = PrecodingMatrix::from_column_major(n_t, rows.len(), &entries).expect("shape matches");
                return Some(super::project_power(&out, self.budget));
            }
        }
        None
    }
}

/// Reference solution by bisection on `t`.
///
/// Intended for small instances (`K ≤ 3`, `N_t ≤ 4`). The bracket starts at
/// `[0, max_{k} ‖h_k‖ sqrt(P N_par) sin φ]` and shrinks until its width is
/// below `tol` times the initial upper end.
pub fn oracle_solve(h: &ChannelMatrix, c: &Constellation, cfg: &SolveConfig) -> Result<SolveResult> {
    let (symbols, budget) = check_inputs(h, c, cfg)?;
    let (n_t, n_par) = (h.antennas(), symbols.len());
    let angles: Vec<Vec<f64>> = symbols
        .iter()
        .map(|s: &SymbolVector| (0..h.users()).map(|k| c.symbol_angle(s.get(k))).collect())
        .collect();
    let problem = Problem {
        h,
        angles,
        half_angle: c.half_angle(),
        budget,
    };

    let upper0 = (0..h.users()).map(|k| h.row_norm(k)).fold(0.0, f64::max)
        * budget.sqrt()
        * c.half_angle().sin();
    if upper0 == 0.0 {
        return finish(h, c, PrecodingMatrix::zeros(n_t, n_par), budget, SolveStatus::Converged, 0);
    }

    let starts: Vec<PrecodingMatrix> = (0..cfg.restarts)
        .map(|r| {
            let mut rng = Substream::new(cfg.seed, domain::SOLVER, 1 << 32 | r as u64);
            let entries: Vec<Complex64> = (0..n_t * n_par).map(|_| rng.complex_normal(1.0)).collect();
            PrecodingMatrix::from_column_major(n_t, n_par, &entries).expect("shape matches")
        })
        .collect();

    let (mut lo, mut hi) = (0.0, upper0);
    let mut best = PrecodingMatrix::zeros(n_t, n_par);
    let mut iterations = 0;
    while hi - lo >= cfg.tol * upper0 {
        let mid = 0.5 * (lo + hi);
        iterations += 1;
        // Warm start from the last feasible point first, then the restarts.
        let found = std::iter::once(best.clone())
            .chain(starts.iter().cloned())
            .find_map(|s| problem.feasible(mid, s, cfg.max_iters))
            .or_else(|| problem.certify(mid, cfg.max_iters));
        match found {
            Some(x) => {
                lo = mid;
                best = x;
            }
            None => hi = mid,
        }
    }
    finish(h, c, best, budget, SolveStatus::Converged, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn cfg() -> SolveConfig {
        SolveConfig {
            tol: 1e-5,
            max_iters: 20_000,
            restarts: 2,
            ..SolveConfig::default()
        }
    }

    #[test]
    fn analytic_cases() {
        let q = Constellation::qpsk();
        let r = oracle_solve(&ChannelMatrix::identity(1), &q, &cfg()).unwrap();
        assert!((r.t - FRAC_1_SQRT_2).abs() < 1e-4, "{}", r.t);

        let h = ChannelMatrix::from_row_major(1, 1, &[Complex64::new(2.0, 0.0)]).unwrap();
        let r = oracle_solve(&h, &q, &SolveConfig { power_budget: 4.0, ..cfg() }).unwrap();
        assert!((r.t - 4.0 * (PI / 4.0).sin()).abs() < 1e-3, "{}", r.t);

        let r = oracle_solve(&ChannelMatrix::identity(2), &q, &cfg()).unwrap();
        assert!((r.t - 0.5).abs() < 1e-3, "{}", r.t);
        assert!(r.feasibility_residual == 0.0);
    }
}
