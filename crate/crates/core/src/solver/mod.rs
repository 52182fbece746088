//! Max-min fairness symbol-level precoding.
//!
//! The design problem is
//!
//! ```text
//! maximize   min_{k,l} d_{k,l}(X)
//! subject to ‖X‖_F² ≤ P · N_par
//! ```
//!
//! over the reduced precoding matrix. Each `d_{k,l}` is the minimum of two
//! linear functions of `x_l`, so the problem is an SOCP. Margins of column
//! `l` only involve `x_l` and are positively homogeneous, hence
//! `t*(p) = sqrt(p) · a_l` for a column given power `p`, and the shared
//! budget is split as `p_l ∝ 1 / a_l²`. [`solve_maxmin`] computes every `a_l`
//! on the unit ball, by default exactly as the distance from the origin to
//! the convex hull of the constraint rows, then combines them.
//!
//! [`oracle_solve`] is an independent check working on the whole matrix:
//! bisection on `t` with a projection-based feasibility test.

mod column;
mod minnorm;
mod oracle;
mod softmin;

use serde::{Deserialize, Serialize};

use crate::channel::rng::{domain, Substream};
use crate::constellation::{enumerate_reduced_symbol_vectors, qos_matrix, Constellation, SymbolVector};
use crate::error::{Result, SlpError};
use crate::matrix::{ChannelMatrix, PrecodingMatrix};

pub use oracle::oracle_solve;

/// How each per-column subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Wolfe's minimum-norm point on the dual. Finite and exact up to
    /// rounding; ignores `smoothing` and `restarts`.
    #[default]
    MinNorm,
    /// Annealed softmin ascent with random restarts.
    Softmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    /// Average power per symbol vector, `P`.
    pub power_budget: f64,
    /// Relative objective tolerance.
    pub tol: f64,
    /// Iteration cap per restart (per column for the solver, per
    /// feasibility test for the oracle).
    pub max_iters: usize,
    /// Initial softmin temperature relative to the margin scale.
    pub smoothing: f64,
    pub restarts: usize,
    /// Seed for random restarts.
    pub seed: u64,
    pub method: SolverMethod,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            power_budget: 1.0,
            tol: 1e-5,
            max_iters: 5000,
            smoothing: 0.1,
            restarts: 1,
            seed: 0,
            method: SolverMethod::MinNorm,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.power_budget > 0.0) || !self.power_budget.is_finite() {
            return Err(SlpError::arg("power budget must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(SlpError::arg("tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(SlpError::arg("max_iters must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(SlpError::arg("restarts must be at least 1"));
        }
        if !(self.smoothing > 0.0) {
            return Err(SlpError::arg("smoothing must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// `N_t × N_par` precoders for the reduced symbol set.
    pub x: PrecodingMatrix,
    /// Achieved worst-case margin, replayed from `x`.
    pub t: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// `max(0, ‖X‖_F² - P·N_par)`.
    pub feasibility_residual: f64,
}

/// Minimum margin over users and reduced symbol vectors.
pub fn evaluate_objective(h: &ChannelMatrix, x: &PrecodingMatrix, c: &Constellation) -> Result<f64> {
    let symbols = enumerate_reduced_symbol_vectors(c, h.users())?;
    Ok(qos_matrix(h, x, &symbols, c)?.min())
}

/// Euclidean projection onto `{X : ‖X‖_F² ≤ budget}`.
pub fn project_power(x: &PrecodingMatrix, budget: f64) -> PrecodingMatrix {
    let sq = x.frobenius_sq();
    if sq <= budget {
        x.clone()
    } else {
        x.scaled((budget / sq).sqrt())
    }
}

fn finish(
    h: &ChannelMatrix,
    c: &Constellation,
    x: PrecodingMatrix,
    budget: f64,
    status: SolveStatus,
    iterations: usize,
) -> Result<SolveResult> {
    let t = evaluate_objective(h, &x, c)?;
    let feasibility_residual = (x.frobenius_sq() - budget).max(0.0);
    Ok(SolveResult {
        x,
        t,
        status,
        iterations,
        feasibility_residual,
    })
}

fn check_inputs(h: &ChannelMatrix, c: &Constellation, cfg: &SolveConfig) -> Result<(Vec<SymbolVector>, f64)> {
    cfg.validate()?;
    let symbols = enumerate_reduced_symbol_vectors(c, h.users())?;
    let budget = cfg.power_budget * symbols.len() as f64;
    Ok((symbols, budget))
}

/// Solves the max-min precoding problem over the reduced symbol set.
///
/// Never fails on non-convergence: the best iterate is returned with
/// `status = MaxIters`.
pub fn solve_maxmin(h: &ChannelMatrix, c: &Constellation, cfg: &SolveConfig) -> Result<SolveResult> {
    let (symbols, budget) = check_inputs(h, c, cfg)?;
    let n_t = h.antennas();
    if h.is_zero() {
        return finish(h, c, PrecodingMatrix::zeros(n_t, symbols.len()), budget, SolveStatus::Converged, 0);
    }

    let mut directions = Vec::with_capacity(symbols.len());
    let mut values = Vec::with_capacity(symbols.len());
    let mut converged = true;
    let mut iterations = 0;
    for (l, s) in symbols.iter().enumerate() {
        let rows = column::ColumnConstraints::new(h, c, s);
        if cfg.method == SolverMethod::MinNorm {
            let sol = rows.maximize_min_norm(cfg);
            iterations += sol.iterations;
            converged &= sol.converged;
            values.push(sol.value);
            directions.push(sol.direction);
            continue;
        }
        let mut best: Option<column::ColumnSolution> = None;
        for r in 0..cfg.restarts {
            let start = if r == 0 {
                rows.matched_filter_start()
            } else {
                let mut rng = Substream::new(cfg.seed, domain::SOLVER, (l * cfg.restarts + r) as u64);
                (0..2 * n_t).map(|_| rng.normal_pair().0).collect()
            };
            let sol = rows.maximize_softmin(start, cfg);
            iterations += sol.iterations;
            // Ties keep the lower restart index.
            if best.as_ref().is_none_or(|b| sol.value > b.value) {
                best = Some(sol);
            }
        }
        let best = best.expect("restarts >= 1");
        converged &= best.converged;
        values.push(best.value);
        directions.push(best.direction);
    }

    let status = if converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIters
    };
    let mut x = PrecodingMatrix::zeros(n_t, symbols.len());
    if values.iter().any(|&a| a <= 0.0) {
        // Some column cannot reach a positive margin; the optimum is 0 and
        // the all-zero precoder attains it.
        return finish(h, c, x, budget, status, iterations);
    }
    // p_l = t² / a_l² with Σ p_l = budget.
    let inv_sq: f64 = values.iter().map(|a| 1.0 / (a * a)).sum();
    let t = (budget / inv_sq).sqrt();
    for (l, (dir, a)) in directions.iter().zip(&values).enumerate() {
        let scale = t / a;
        let col: Vec<_> = (0..n_t)
            .map(|n| num_complex::Complex64::new(dir[n] * scale, dir[n + n_t] * scale))
            .collect();
        x.set_column(l, &col);
    }
    // Land exactly on the power sphere.
    let x = x.scaled((budget / x.frobenius_sq()).sqrt());
    let x = project_power(&x, budget);
    finish(h, c, x, budget, status, iterations)
}
