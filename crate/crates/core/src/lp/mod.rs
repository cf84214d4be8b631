//! Dense linear programs and a two-phase primal simplex solver.
//!
//! Every LP in the toolkit goes through [`solve_lp`]: stage subproblems,
//! Benders node problems, the extensive form, assessment re-solves and the
//! TV-ball cross-check. The solver works on a dense tableau and returns both
//! primal values and row multipliers.
//!
//! Dual sign convention: for a minimization, `duals[i]` is the derivative of
//! the optimal value with respect to `rows[i].rhs`. A binding `>=` row has a
//! nonnegative multiplier, a binding `<=` row a nonpositive one.

mod format;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::write_cplex_lp;

/// Pivot elements smaller than this are never selected by the ratio test.
pub const PIVOT_TOL: f64 = 1e-9;
/// Primal feasibility tolerance (phase-one objective, row residuals).
pub const FEAS_TOL: f64 = 1e-7;
/// Pivot magnitude below which the tableau is declared numerically broken.
pub const BREAKDOWN_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Sense {
    pub fn flipped(self) -> Sense {
        match self {
            Sense::Le => Sense::Ge,
            Sense::Eq => Sense::Eq,
            Sense::Ge => Sense::Le,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// A minimization LP: `min c'x  s.t.  rows, lower <= x <= upper`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Adds a variable and returns its column index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_nonneg(&mut self, cost: f64) -> usize {
        self.add_var(cost, 0.0, f64::INFINITY)
    }

    pub fn add_free(&mut self, cost: f64) -> usize {
        self.add_var(cost, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Adds a row and returns its index. Zero coefficients are dropped and
    /// repeated indices are merged.
    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
        for (j, a) in coefs {
            if a == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(k, _)| *k == j) {
                Some(entry) => entry.1 += a,
                None => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Row {
            coefs: merged,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Invalid("bound vectors differ in length from objective".into()));
        }
        for (j, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::Invalid(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::Invalid(format!("variable {j} has non-finite cost")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Invalid(format!("row {i} has non-finite rhs")));
            }
            for &(j, a) in &row.coefs {
                if j >= n {
                    return Err(LpError::Invalid(format!("row {i} references variable {j} >= {n}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Invalid(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Largest absolute row or bound violation of `x`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let lhs = row.activity(x);
            let viol = match row.sense {
                Sense::Le => lhs - row.rhs,
                Sense::Ge => row.rhs - lhs,
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    /// Objective of the LP dual at the multipliers `y`, with the reduced costs
    /// priced against the variable bounds. Equals the primal optimum when `y`
    /// is an optimal dual; returns -inf when `y` leaves a reduced cost pointing
    /// at an infinite bound.
    pub fn dual_objective(&self, y: &[f64]) -> f64 {
        let reduced = self.reduced_costs(y);
        let mut value: f64 = self.rows.iter().zip(y).map(|(r, yi)| r.rhs * yi).sum();
        for (j, &d) in reduced.iter().enumerate() {
            if d > 0.0 {
                value += if self.lower[j].is_finite() { d * self.lower[j] } else { f64::NEG_INFINITY };
            } else if d < 0.0 {
                value += if self.upper[j].is_finite() { d * self.upper[j] } else { f64::NEG_INFINITY };
            }
        }
        value
    }

    pub fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        let mut d = self.objective.clone();
        for (row, &yi) in self.rows.iter().zip(y) {
            for &(j, a) in &row.coefs {
                d[j] -= yi * a;
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: f64,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn without_point(status: LpStatus, n_vars: usize, n_rows: usize) -> Self {
        let objective_value = match status {
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            LpStatus::Optimal => unreachable!("optimal solutions carry a point"),
        };
        LpSolution {
            status,
            objective_value,
            primal: vec![0.0; n_vars],
            duals: vec![0.0; n_rows],
        }
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("invalid linear program: {0}")]
    Invalid(String),
    #[error("numerical breakdown: pivot magnitude {0:e} below tolerance")]
    NumericalBreakdown(f64),
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
}

/// Solves `lp` to optimality, or proves it infeasible or unbounded.
///
/// Pricing is Dantzig's rule for the first `10 * (rows + cols)` iterations of
/// each phase and Bland's rule afterwards, so the result is deterministic for
/// identical input and cycling cannot persist.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    simplex::solve(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_ge_row() {
        let mut lp = LinearProgram::new();
        let x = lp.add_nonneg(1.0);
        lp.add_row(vec![(x, 1.0)], Sense::Ge, 1.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.duals[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new();
        lp.add_nonneg(-1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn infeasible_le_negative() {
        let mut lp = LinearProgram::new();
        let x = lp.add_nonneg(0.0);
        lp.add_row(vec![(x, 1.0)], Sense::Le, -1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn le_dual_is_nonpositive() {
        // max x + y  s.t. x + 2y <= 4, 3x + y <= 6  ->  min -(x + y)
        let mut lp = LinearProgram::new();
        let x = lp.add_nonneg(-1.0);
        let y = lp.add_nonneg(-1.0);
        lp.add_row(vec![(x, 1.0), (y, 2.0)], Sense::Le, 4.0);
        lp.add_row(vec![(x, 3.0), (y, 1.0)], Sense::Le, 6.0);
        let sol = solve_lp(&lp).unwrap();
        assert_abs_diff_eq!(sol.objective_value, -2.8, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.duals[0], -0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.duals[1], -0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(lp.dual_objective(&sol.duals), sol.objective_value, epsilon = 1e-12);
    }

    #[test]
    fn free_and_bounded_variables() {
        // min x - y  s.t. x - y >= -3, -2 <= x <= 5, y free, y <= 4
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, -2.0, 5.0);
        let y = lp.add_var(-1.0, f64::NEG_INFINITY, 4.0);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], Sense::Ge, -3.0);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, -3.0, epsilon = 1e-12);
        assert!(lp.primal_residual(&sol.primal) <= 1e-9);
        assert_abs_diff_eq!(lp.dual_objective(&sol.duals), -3.0, epsilon = 1e-9);
    }

    #[test]
    fn equality_rows_and_redundancy() {
        // x + y = 2 twice (redundant), min x + 2y
        let mut lp = LinearProgram::new();
        let x = lp.add_nonneg(1.0);
        let y = lp.add_nonneg(2.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 2.0);
        lp.add_row(vec![(x, 2.0), (y, 2.0)], Sense::Eq, 4.0);
        let sol = solve_lp(&lp).unwrap();
        assert_abs_diff_eq!(sol.objective_value, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lp.dual_objective(&sol.duals), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_index() {
        let mut lp = LinearProgram::new();
        lp.add_nonneg(1.0);
        lp.rows.push(Row {
            coefs: vec![(3, 1.0)],
            sense: Sense::Ge,
            rhs: 0.0,
        });
        assert!(matches!(solve_lp(&lp), Err(LpError::Invalid(_))));
    }
}
