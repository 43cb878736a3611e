use log::warn;
use serde::Serialize;
use thiserror::Error;

use super::branching::INT_TOL;
use crate::colgen::ColumnPool;
use crate::model::{Convexity, StructuredModel};
use crate::pricing::solve_fixed_design;

/// Tolerance between a stored column cost and its recomputed value.
pub const COST_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum RecoveryError {
    #[error("lambda {value} of column {column} is not integral")]
    Fractional { column: usize, value: f64 },
    #[error("block {0} selects no column but its convexity row is an equality")]
    Unassigned(usize),
    #[error("block {block} selects {count} columns")]
    Multiple { block: usize, count: usize },
    #[error("design {design:?} of block {block} has no feasible completion")]
    NoCompletion { block: usize, design: Vec<i64> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockSolution {
    /// `None` for an unused at-most-one block; its point then has `y = 0`.
    pub design: Option<Vec<i64>>,
    pub column: Option<usize>,
    /// `(y, z)` in block variable order.
    pub point: Vec<f64>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Incumbent {
    pub x: Vec<f64>,
    pub lambda: Vec<(usize, f64)>,
    pub blocks: Vec<BlockSolution>,
    /// `c'x + sum` of recovered block costs.
    pub objective: f64,
    /// Master objective from stored column costs.
    pub master_objective: f64,
}

impl Incumbent {
    /// Largest violation of complicating rows, shared-design equalities and block constraints.
    pub fn max_violation(&self, model: &StructuredModel) -> f64 {
        let mut act = model.apply_a(&self.x);
        for (b, s) in model.blocks.iter().zip(&self.blocks) {
            for (r, v) in b.linking.apply(&s.point[..b.p()]).into_iter().enumerate() {
                act[r] += v;
            }
        }
        let mut worst = act.iter().zip(&model.rhs).map(|(a, b)| b - a).fold(0.0f64, f64::max);
        for (b, s) in model.blocks.iter().zip(&self.blocks) {
            if s.design.is_none() {
                continue;
            }
            for g in &b.constraints {
                worst = worst.max(g.eval(&s.point).unwrap_or(f64::INFINITY));
            }
        }
        if model.nonanticipative {
            for w in self.blocks.windows(2) {
                for j in 0..model.blocks[0].p() {
                    worst = worst.max((w[0].point[j] - w[1].point[j]).abs());
                }
            }
        }
        worst
    }

    pub fn designs(&self) -> Vec<Option<Vec<i64>>> {
        self.blocks.iter().map(|b| b.design.clone()).collect()
    }
}

/// Maps an integral master solution back to `(x, y_i, z_i)`.
///
/// Every selected design is re-solved with `y` fixed. A stored cost above the
/// recomputed one is replaced in the pool, which lowers the incumbent value.
pub fn recover_original_solution(
    model: &StructuredModel,
    pool: &mut ColumnPool,
    x: &[f64],
    lambda: &[(usize, f64)],
) -> Result<Incumbent, RecoveryError> {
    let nb = model.blocks.len();
    let mut chosen: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for &(k, l) in lambda {
        if l > INT_TOL && l < 1.0 - INT_TOL {
            return Err(RecoveryError::Fractional { column: k, value: l });
        }
        if l >= 1.0 - INT_TOL {
            chosen[pool.get(k).block].push(k);
        }
    }
    let mut master_objective: f64 = model.cost.iter().zip(x).map(|(c, v)| c * v).sum();
    let mut objective = master_objective;
    let mut blocks = Vec::with_capacity(nb);
    for (i, b) in model.blocks.iter().enumerate() {
        match chosen[i].as_slice() {
            [] => {
                if b.convexity == Convexity::Equality {
                    return Err(RecoveryError::Unassigned(i));
                }
                let zero = vec![0i64; b.p()];
                let r = solve_fixed_design(b, &zero);
                let point = r.point.unwrap_or_else(|| {
                    let mut p = vec![0.0; b.p()];
                    p.extend(b.z.iter().map(|v| v.lo));
                    p
                });
                blocks.push(BlockSolution { design: None, column: None, point, cost: 0.0 });
            }
            [k] => {
                let col = pool.get(*k).clone();
                let r = solve_fixed_design(b, &col.design);
                let Some(point) = r.point else {
                    return Err(RecoveryError::NoCompletion { block: i, design: col.design });
                };
                master_objective += col.cost;
                let cost = r.u.min(col.cost);
                if r.u < col.cost - COST_TOL {
                    warn!(
                        "block {i} design {:?}: stored cost {} above recomputed {}; repricing",
                        col.design, col.cost, r.u
                    );
                }
                pool.set_exact_cost(*k, cost);
                objective += cost;
                blocks.push(BlockSolution { design: Some(col.design), column: Some(*k), point, cost });
            }
            many => return Err(RecoveryError::Multiple { block: i, count: many.len() }),
        }
    }
    Ok(Incumbent { x: x.to_vec(), lambda: lambda.to_vec(), blocks, objective, master_objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colgen::{Column, Provenance};
    use crate::model::tests::single_block;

    fn pool_with(design: i64, cost: f64) -> ColumnPool {
        let mut p = ColumnPool::new();
        p.insert(Column { block: 0, design: vec![design], cost, provenance: Provenance::Priced, exact: false });
        p
    }

    #[test]
    fn exact_design_matches() {
        let m = single_block(0, 4);
        let mut p = pool_with(2, 0.0);
        let inc = recover_original_solution(&m, &mut p, &[], &[(0, 1.0)]).unwrap();
        assert_eq!(inc.objective, 0.0);
        assert_eq!(inc.blocks[0].point, vec![2.0]);
        assert!(p.get(0).exact);
        assert!(inc.max_violation(&m) <= 0.0);
    }

    #[test]
    fn overstated_cost_lowers_value() {
        let m = single_block(0, 4);
        let mut p = pool_with(3, 2.5);
        let inc = recover_original_solution(&m, &mut p, &[], &[(0, 1.0)]).unwrap();
        assert_eq!(inc.master_objective, 2.5);
        assert!((inc.objective - 1.0).abs() < 1e-9);
        assert!((p.get(0).cost - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unused_block_and_errors() {
        let mut m = single_block(0, 4);
        let mut p = pool_with(3, 1.0);
        assert_eq!(recover_original_solution(&m, &mut p, &[], &[(0, 0.0)]), Err(RecoveryError::Unassigned(0)));
        assert!(matches!(
            recover_original_solution(&m, &mut p, &[], &[(0, 0.5)]),
            Err(RecoveryError::Fractional { .. })
        ));
        m.blocks[0].convexity = Convexity::AtMostOne;
        let inc = recover_original_solution(&m, &mut p, &[], &[(0, 0.0)]).unwrap();
        assert_eq!(inc.blocks[0].design, None);
        assert_eq!(inc.blocks[0].point, vec![0.0]);
        assert_eq!(inc.objective, 0.0);
    }
}
