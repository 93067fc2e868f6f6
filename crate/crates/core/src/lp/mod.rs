//! Linear programs with bounded variables and ranged rows, and the solver
//! interface used by the power-flow formulations.

mod mps;
mod simplex;

pub use mps::{mps_string, write_mps};
pub use simplex::DenseSimplex;

use crate::error::{Error, Result};

pub const INF: f64 = f64::INFINITY;

/// One constraint `lo <= sum coeffs * x <= hi`; either side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

impl Row {
    pub fn le(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row {
            coeffs,
            lo: -INF,
            hi: rhs,
        }
    }

    pub fn ge(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row {
            coeffs,
            lo: rhs,
            hi: INF,
        }
    }

    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Row {
            coeffs,
            lo: rhs,
            hi: rhs,
        }
    }

    pub fn range(coeffs: Vec<(usize, f64)>, lo: f64, hi: f64) -> Self {
        Row { coeffs, lo, hi }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// Minimize `objective . x` subject to the rows and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, row: Row) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Config(
                "bound vectors do not match variable count".into(),
            ));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config(
                "objective coefficients must be finite".into(),
            ));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j] == INF || self.upper[j] == -INF {
                return Err(Error::Config(format!(
                    "variable {j} has bounds [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.lo > row.hi || row.lo == INF || row.hi == -INF {
                return Err(Error::Config(format!(
                    "row {r} has bounds [{}, {}]",
                    row.lo, row.hi
                )));
            }
            if let Some(&(j, a)) = row.coeffs.iter().find(|&&(j, a)| j >= n || !a.is_finite()) {
                return Err(Error::Config(format!(
                    "row {r} has bad coefficient {a} on column {j}"
                )));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for row in &self.rows {
            let a = row.activity(x);
            worst = worst.max(row.lo - a).max(a - row.hi);
        }
        worst
    }

    /// Lagrangian lower bound `min_{x in box} c.x - y.(Ax - s)` over boxed
    /// row activities `s`. Equals the optimum at optimal row duals `y`;
    /// `-inf` when `y` is not dual feasible. Multipliers below `1e-9` in
    /// magnitude count as zero so that roundoff on a basic row does not
    /// pair with an infinite bound.
    pub fn dual_bound(&self, y: &[f64]) -> f64 {
        let mut reduced = self.objective.clone();
        for (row, &yr) in self.rows.iter().zip(y) {
            for &(j, a) in &row.coeffs {
                reduced[j] -= yr * a;
            }
        }
        let pick = |d: f64, lo: f64, hi: f64| {
            if d > 1e-9 {
                d * lo
            } else if d < -1e-9 {
                d * hi
            } else {
                0.0
            }
        };
        let mut bound = 0.0;
        for j in 0..self.num_vars() {
            bound += pick(reduced[j], self.lower[j], self.upper[j]);
        }
        for (row, &yr) in self.rows.iter().zip(y) {
            bound += pick(yr, row.lo, row.hi);
        }
        if bound.is_nan() {
            f64::NEG_INFINITY
        } else {
            bound
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; meaningful only when optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals at the final basis.
    pub row_duals: Vec<f64>,
    pub iterations: usize,
}

/// A linear-programming backend.
pub trait LpSolver: Send + Sync {
    /// Solves `lp`. Infeasibility and unboundedness are reported in the
    /// status; `Err` is reserved for malformed input and numerical failure.
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution>;
}

/// Convenience wrapper around the built-in solver.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    DenseSimplex::default().solve(lp)
}
