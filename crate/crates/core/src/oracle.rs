//! Reference solvers that bypass column generation.

use thiserror::Error;

use crate::colgen::{build_rmp_lp, Column, ColumnPool, NodeBounds, Provenance};
use crate::global::{solve_global, Candidate, GlobalOptions, GlobalProblem, GlobalResult};
use crate::lp::{solve_lp, solve_milp, LpError, LpStatus, MilpOptions};
use crate::model::{flatten_fullspace, Expr, StructuredModel};
use crate::pricing::{enumerate_designs, LatticeError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration refused: block `{0}` has continuous inner variables")]
    Continuous(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// The master problem over every feasible design of every block.
#[derive(Clone, Debug)]
pub struct EnumeratedMaster {
    pub pool: ColumnPool,
    pub columns: Vec<usize>,
}

impl EnumeratedMaster {
    /// Optimal value of the LP relaxation, `+inf` when infeasible.
    pub fn lp_value(&self, model: &StructuredModel) -> Result<f64, OracleError> {
        let rmp = build_rmp_lp(model, &NodeBounds::root(), &self.pool, &self.columns);
        let sol = solve_lp(&rmp.lp)?;
        Ok(match sol.status {
            LpStatus::Optimal => sol.objective,
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        })
    }

    /// Optimal value with binary `lambda`, `+inf` when infeasible.
    pub fn milp_value(&self, model: &StructuredModel) -> Result<MasterOptimum, OracleError> {
        let rmp = build_rmp_lp(model, &NodeBounds::root(), &self.pool, &self.columns);
        let mut integer: Vec<bool> = model.x.iter().map(|v| v.integer).collect();
        integer.resize(rmp.lp.num_vars(), true);
        let opts = MilpOptions { rel_gap: 1e-12, node_limit: 1_000_000, int_tol: 1e-9 };
        let sol = solve_milp(&rmp.lp, &integer, &opts)?;
        let designs = match sol.status {
            LpStatus::Optimal => rmp
                .columns
                .iter()
                .enumerate()
                .filter(|(k, _)| sol.x[rmp.lambda_var(*k)] > 0.5)
                .map(|(_, &c)| (self.pool.get(c).block, self.pool.get(c).design.clone()))
                .collect(),
            _ => Vec::new(),
        };
        Ok(MasterOptimum {
            objective: match sol.status {
                LpStatus::Optimal => sol.objective,
                LpStatus::Infeasible => f64::INFINITY,
                LpStatus::Unbounded => f64::NEG_INFINITY,
            },
            proven: sol.proven,
            designs,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterOptimum {
    pub objective: f64,
    pub proven: bool,
    /// `(block, design)` of the selected columns.
    pub designs: Vec<(usize, Vec<i64>)>,
}

/// Enumerates every feasible design with its exact cost. Refuses blocks with
/// continuous inner variables, whose costs have no finite enumeration.
pub fn enumerate_master(model: &StructuredModel) -> Result<EnumeratedMaster, OracleError> {
    if let Some(b) = model.blocks.iter().find(|b| b.has_continuous_z()) {
        return Err(OracleError::Continuous(b.name.clone()));
    }
    let mut pool = ColumnPool::new();
    for (i, b) in model.blocks.iter().enumerate() {
        for (design, cost) in enumerate_designs(b)? {
            pool.insert(Column { block: i, design, cost, provenance: Provenance::Initial, exact: true });
        }
    }
    let columns = (0..pool.len()).collect();
    Ok(EnumeratedMaster { pool, columns })
}

/// The undecomposed model as one global-optimization problem. Block
/// candidates are combined index-wise across blocks.
///
/// An unused at-most-one block appears here as `y = 0` with its own cost, so
/// the value agrees with the master only where that cost is zero.
pub fn fullspace_problem(model: &StructuredModel) -> GlobalProblem {
    let flat = flatten_fullspace(model);
    let most = model.blocks.iter().map(|b| b.z_candidates.len()).max().unwrap_or(0);
    let mut candidates = Vec::with_capacity(most);
    for k in 0..most {
        let mut assigns: Vec<(usize, Expr)> = Vec::new();
        for (b, &off) in model.blocks.iter().zip(&flat.block_offsets) {
            let Some(cand) = b.z_candidates.get(k.min(b.z_candidates.len().saturating_sub(1))) else { continue };
            let cont: Vec<usize> = b.z.iter().enumerate().filter(|(_, v)| !v.integer).map(|(j, _)| off + b.p() + j).collect();
            for (&var, e) in cont.iter().zip(cand) {
                assigns.push((var, e.remap_vars(&|i| i + off)));
            }
        }
        candidates.push(Candidate { assigns });
    }
    GlobalProblem {
        domains: flat.domains,
        objective: flat.objective,
        inequalities: flat.inequalities,
        equalities: flat.equalities,
        candidates,
    }
}

pub fn solve_fullspace(model: &StructuredModel, opts: &GlobalOptions) -> GlobalResult {
    solve_global(&fullspace_problem(model), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{encode_circle_cutting, gen_branching_adversary, CircleCuttingInstance, Rectangle};

    #[test]
    fn adversary_master_values() {
        let m = gen_branching_adversary(0);
        let kappa = m.blocks[0].objective.eval(&[1.0, 0.0]).unwrap();
        let e = enumerate_master(&m).unwrap();
        assert_eq!(e.columns.len(), 2);
        assert!((e.lp_value(&m).unwrap() - kappa).abs() < 1e-9);
        let opt = e.milp_value(&m).unwrap();
        assert!((opt.objective - 2.0 * kappa).abs() < 1e-9);
        assert_eq!(opt.designs, vec![(0, vec![1, 1])]);
    }

    #[test]
    fn circles_are_refused_by_enumeration() {
        let inst = CircleCuttingInstance { radii: vec![1.0], rectangles: vec![Rectangle { width: 2.0, height: 2.0 }], seed: 0 };
        let m = encode_circle_cutting(&inst).unwrap();
        assert!(matches!(enumerate_master(&m), Err(OracleError::Continuous(_))));
        let r = solve_fullspace(&m, &GlobalOptions::with_gap(1e-6));
        assert!((r.upper - (4.0 - std::f64::consts::PI)).abs() < 1e-6);
    }
}
