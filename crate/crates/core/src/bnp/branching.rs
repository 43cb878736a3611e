use serde::{Deserialize, Serialize};

use crate::colgen::{BoundSense, Branch, ColumnPool, NodeBounds};
use crate::model::StructuredModel;

pub const INT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    MostFractional,
    /// Heaviest fractional component by declared weight; weightless components count as 1.
    LargestEntityFirst,
}

impl BranchRule {
    /// Largest-entity-first when the instance declares weights, most-fractional otherwise.
    pub fn default_for(model: &StructuredModel) -> Self {
        if model.blocks.iter().any(|b| b.y.iter().any(|v| v.weight.is_some())) {
            BranchRule::LargestEntityFirst
        } else {
            BranchRule::MostFractional
        }
    }
}

/// Aggregated designs `y_i = sum_k lambda_k y_k` of a master solution.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub y: Vec<Vec<f64>>,
    pub max_frac: f64,
    /// `(block, component)` attaining `max_frac`.
    pub at: Option<(usize, usize)>,
}

impl Aggregate {
    pub fn is_integral(&self) -> bool {
        self.max_frac <= INT_TOL
    }
}

fn frac(v: f64) -> f64 {
    (v - v.round()).abs()
}

pub fn aggregate_originals(model: &StructuredModel, lambda: &[(usize, f64)], pool: &ColumnPool) -> Aggregate {
    let mut y: Vec<Vec<f64>> = model.blocks.iter().map(|b| vec![0.0; b.p()]).collect();
    for &(k, l) in lambda {
        let c = pool.get(k);
        for (acc, &d) in y[c.block].iter_mut().zip(&c.design) {
            *acc += l * d as f64;
        }
    }
    let mut max_frac = 0.0;
    let mut at = None;
    for (i, yi) in y.iter().enumerate() {
        for (j, &v) in yi.iter().enumerate() {
            let f = frac(v);
            if f > max_frac {
                max_frac = f;
                at = Some((i, j));
            }
        }
    }
    Aggregate { y, max_frac, at }
}

/// A two-way split of a node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchDecision {
    pub down: Branch,
    pub up: Branch,
}

/// Picks a fractional aggregated component and splits it at its floor.
/// `None` when every component is integral.
pub fn choose_branch(agg: &Aggregate, model: &StructuredModel, rule: BranchRule) -> Option<BranchDecision> {
    let mut best: Option<(f64, f64, usize, usize)> = None;
    for (i, yi) in agg.y.iter().enumerate() {
        for (j, &v) in yi.iter().enumerate() {
            let f = frac(v);
            if f <= INT_TOL {
                continue;
            }
            let w = match rule {
                BranchRule::MostFractional => 0.0,
                BranchRule::LargestEntityFirst => model.blocks[i].y[j].weight.unwrap_or(1.0),
            };
            let better = match best {
                None => true,
                Some((bw, bf, _, _)) => w > bw || (w == bw && f > bf + 1e-12),
            };
            if better {
                best = Some((w, f, i, j));
            }
        }
    }
    let (_, _, block, comp) = best?;
    let fl = agg.y[block][comp].floor() as i64;
    Some(BranchDecision {
        down: Branch::Y { block, comp, sense: BoundSense::Le, bound: fl },
        up: Branch::Y { block, comp, sense: BoundSense::Ge, bound: fl + 1 },
    })
}

/// Most fractional integer `x` variable.
pub fn choose_x_branch(model: &StructuredModel, x: &[f64]) -> Option<BranchDecision> {
    let (var, v) = model
        .x
        .iter()
        .zip(x)
        .enumerate()
        .filter(|(_, (d, &v))| d.integer && frac(v) > INT_TOL)
        .map(|(j, (_, &v))| (j, v))
        .max_by(|a, b| frac(a.1).total_cmp(&frac(b.1)).then(b.0.cmp(&a.0)))?;
    Some(BranchDecision {
        down: Branch::X { var, sense: BoundSense::Le, bound: v.floor() },
        up: Branch::X { var, sense: BoundSense::Ge, bound: v.floor() + 1.0 },
    })
}

/// Last resort when `y` is integral but `lambda` is not: exclude or select the
/// most expensive fractional column.
pub fn choose_lambda_branch(lambda: &[(usize, f64)], pool: &ColumnPool) -> Option<BranchDecision> {
    let k = lambda
        .iter()
        .filter(|(_, l)| *l > INT_TOL && *l < 1.0 - INT_TOL)
        .map(|&(k, _)| k)
        .max_by(|&a, &b| pool.get(a).cost.total_cmp(&pool.get(b).cost).then(b.cmp(&a)))?;
    let c = pool.get(k);
    Some(BranchDecision {
        down: Branch::Exclude { block: c.block, design: c.design.clone() },
        up: Branch::Select { block: c.block, design: c.design.clone() },
    })
}

/// Pool columns that satisfy every restriction of the node.
pub fn filter_columns(model: &StructuredModel, node: &NodeBounds, pool: &ColumnPool) -> Vec<usize> {
    pool.columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| node.admits(model, c.block, &c.design))
        .map(|(k, _)| k)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PruneDecision {
    Keep,
    Prune,
}

/// Prune iff `lb >= ub - eps * |ub|`.
pub fn early_prune(running_lb: f64, ub: f64, eps: f64) -> PruneDecision {
    if (crate::colgen::Cutoff { ub, rel_gap: eps }).prunes(running_lb) {
        PruneDecision::Prune
    } else {
        PruneDecision::Keep
    }
}
