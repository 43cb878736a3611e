//! Linear programming kernel for restricted master problems.

mod milp;
mod simplex;

use std::fmt;

use thiserror::Error;

use crate::model::Triplet;

pub use milp::{solve_milp, MilpOptions, MilpSolution};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub entries: Vec<Triplet>,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    /// Adds a variable with the given bounds and returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    /// Adds a row and returns its index.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let r = self.rhs.len();
        self.entries
            .extend(coeffs.iter().filter(|(_, v)| *v != 0.0).map(|&(c, v)| Triplet::new(r, c, v)));
        self.senses.push(sense);
        self.rhs.push(rhs);
        r
    }

    pub fn set_coeff(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.entries.push(Triplet::new(row, col, value));
        }
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let m = self.num_rows();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension(format!(
                "{} costs, {} lower, {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.senses.len() != m {
            return Err(LpError::Dimension(format!("{} senses for {} rows", self.senses.len(), m)));
        }
        if let Some(t) = self.entries.iter().find(|t| t.row >= m || t.col >= n) {
            return Err(LpError::Dimension(format!("entry ({}, {}) outside {m}x{n}", t.row, t.col)));
        }
        if let Some(j) = (0..n).find(|&j| !(self.lower[j] <= self.upper[j])) {
            return Err(LpError::Dimension(format!("variable {j} has lower > upper")));
        }
        if self.lower.iter().any(|&l| l == f64::INFINITY) || self.upper.iter().any(|&u| u == f64::NEG_INFINITY) {
            return Err(LpError::Dimension("infinite bound on the wrong side".into()));
        }
        Ok(())
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for t in &self.entries {
            act[t.row] += t.value * x[t.col];
        }
        act
    }

    /// Largest bound or row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for ((a, s), b) in self.activities(x).iter().zip(&self.senses).zip(&self.rhs) {
            let v = match s {
                RowSense::Le => a - b,
                RowSense::Ge => b - a,
                RowSense::Eq => (a - b).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        };
        f.write_str(s)
    }
}

/// Primal-dual result. Row duals follow the minimization convention: a
/// `>=` row has a nonnegative dual, a `<=` row a nonpositive one.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// `b'y + sum_j d_j x_j`; equals the primal objective at optimality.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let by: f64 = lp.rhs.iter().zip(&self.duals).map(|(b, y)| b * y).sum();
        let dx: f64 = self
            .reduced_costs
            .iter()
            .zip(&self.x)
            .filter(|(d, _)| **d != 0.0)
            .map(|(d, x)| d * x)
            .sum();
        by + dx
    }

    /// Writes the basis-independent part of the solution in plain text.
    pub fn debug_dump(&self) -> String {
        let mut s = format!("status {} objective {:.12} iterations {}\n", self.status, self.objective, self.iterations);
        for (j, v) in self.x.iter().enumerate() {
            s.push_str(&format!("x[{j}] = {v:.12} (d = {:.3e})\n", self.reduced_costs.get(j).copied().unwrap_or(0.0)));
        }
        for (i, y) in self.duals.iter().enumerate() {
            s.push_str(&format!("y[{i}] = {y:.12}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LpError {
    #[error("inconsistent LP dimensions: {0}")]
    Dimension(String),
    #[error("simplex iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis matrix became singular")]
    Singular,
}

/// Solves `min c'x` subject to the rows and bounds of `lp`.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    simplex::Simplex::new(lp).run()
}
