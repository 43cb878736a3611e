//! Restricted master LP over a column subset, with node restrictions.

use serde::Serialize;

use super::column::ColumnPool;
use super::cuts::no_good_constraint;
use crate::lp::{LinearProgram, LpSolution, RowSense};
use crate::model::{Block, Convexity, StructuredModel};
use crate::pricing::BlockDuals;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSense {
    Le,
    Ge,
}

/// One branching decision.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Branch {
    /// Bound on the aggregated design component `sum_k lambda_k y_kj` of a block.
    Y { block: usize, comp: usize, sense: BoundSense, bound: i64 },
    X { var: usize, sense: BoundSense, bound: f64 },
    /// The block must not use this design.
    Exclude { block: usize, design: Vec<i64> },
    /// The block must use exactly this design.
    Select { block: usize, design: Vec<i64> },
}

/// Accumulated branching decisions of a node.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct NodeBounds {
    pub branches: Vec<Branch>,
}

impl NodeBounds {
    pub fn root() -> Self {
        Self::default()
    }

    pub fn child(&self, b: Branch) -> Self {
        let mut branches = self.branches.clone();
        branches.push(b);
        NodeBounds { branches }
    }

    /// Blocks a decision on `block` applies to; shared designs propagate to all.
    fn targets(model: &StructuredModel, block: usize) -> std::ops::Range<usize> {
        if model.nonanticipative {
            0..model.blocks.len()
        } else {
            block..block + 1
        }
    }

    /// Per-block `y` box after branching. May be empty.
    pub fn y_box(&self, model: &StructuredModel, i: usize) -> (Vec<i64>, Vec<i64>) {
        let b = &model.blocks[i];
        let (mut lo, mut hi) = (b.y_lo(), b.y_hi());
        for br in &self.branches {
            match br {
                Branch::Y { block, comp, sense, bound } if Self::targets(model, *block).contains(&i) => match sense {
                    BoundSense::Le => hi[*comp] = hi[*comp].min(*bound),
                    BoundSense::Ge => lo[*comp] = lo[*comp].max(*bound),
                },
                Branch::Select { block, design } if Self::targets(model, *block).contains(&i) => {
                    for j in 0..design.len() {
                        lo[j] = lo[j].max(design[j]);
                        hi[j] = hi[j].min(design[j]);
                    }
                }
                _ => {}
            }
        }
        (lo, hi)
    }

    pub fn x_box(&self, model: &StructuredModel) -> (Vec<f64>, Vec<f64>) {
        let mut lo: Vec<f64> = vec![0.0; model.num_x()];
        let mut hi: Vec<f64> = model.x.iter().map(|v| v.upper.unwrap_or(f64::INFINITY)).collect();
        for br in &self.branches {
            if let Branch::X { var, sense, bound } = br {
                match sense {
                    BoundSense::Le => hi[*var] = hi[*var].min(*bound),
                    BoundSense::Ge => lo[*var] = lo[*var].max(*bound),
                }
            }
        }
        (lo, hi)
    }

    pub fn excluded(&self, model: &StructuredModel, i: usize) -> Vec<&[i64]> {
        self.branches
            .iter()
            .filter_map(|br| match br {
                Branch::Exclude { block, design } if Self::targets(model, *block).contains(&i) => Some(design.as_slice()),
                _ => None,
            })
            .collect()
    }

    /// True when the block's convexity row must hold with equality.
    pub fn forces_selection(&self, model: &StructuredModel, i: usize) -> bool {
        model.blocks[i].convexity == Convexity::Equality
            || self
                .branches
                .iter()
                .any(|br| matches!(br, Branch::Select { block, .. } if Self::targets(model, *block).contains(&i)))
    }

    /// Whether a column with this design survives the node's restrictions.
    pub fn admits(&self, model: &StructuredModel, i: usize, design: &[i64]) -> bool {
        let (lo, hi) = self.y_box(model, i);
        design.iter().zip(lo.iter().zip(&hi)).all(|(d, (l, h))| l <= d && d <= h)
            && !self.excluded(model, i).contains(&design)
    }

    /// Block with branching bounds and exclusions applied, used for pricing.
    pub fn restrict_block(&self, model: &StructuredModel, i: usize, base: &Block) -> Block {
        let mut b = base.clone();
        let (lo, hi) = self.y_box(model, i);
        for (v, (l, h)) in b.y.iter_mut().zip(lo.into_iter().zip(hi)) {
            v.lo = l;
            v.hi = h;
        }
        for d in self.excluded(model, i) {
            let g = no_good_constraint(&b, d);
            if !b.constraints.contains(&g) {
                b.constraints.push(g);
            }
        }
        b
    }

    pub fn depth(&self) -> usize {
        self.branches.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowKind {
    Complicating { row: usize },
    Nonanticipativity { block: usize, comp: usize },
    Branching,
}

/// Linear row over `x` and aggregated block designs.
#[derive(Clone, Debug, PartialEq)]
pub struct MasterRow {
    pub kind: RowKind,
    pub sense: RowSense,
    pub rhs: f64,
    pub x: Vec<(usize, f64)>,
    /// `(block, component, coefficient)`
    pub y: Vec<(usize, usize, f64)>,
}

/// Rows linking the blocks at a node: complicating rows, shared-design rows,
/// then branching rows.
pub fn master_rows(model: &StructuredModel, bounds: &NodeBounds) -> Vec<MasterRow> {
    let mut rows: Vec<MasterRow> = (0..model.rows)
        .map(|r| MasterRow {
            kind: RowKind::Complicating { row: r },
            sense: RowSense::Ge,
            rhs: model.rhs[r],
            x: Vec::new(),
            y: Vec::new(),
        })
        .collect();
    for t in &model.a {
        rows[t.row].x.push((t.col, t.value));
    }
    for (i, b) in model.blocks.iter().enumerate() {
        for t in &b.linking.entries {
            rows[t.row].y.push((i, t.col, t.value));
        }
    }
    if model.nonanticipative {
        for i in 0..model.blocks.len().saturating_sub(1) {
            for j in 0..model.blocks[i].p() {
                rows.push(MasterRow {
                    kind: RowKind::Nonanticipativity { block: i, comp: j },
                    sense: RowSense::Eq,
                    rhs: 0.0,
                    x: Vec::new(),
                    y: vec![(i, j, 1.0), (i + 1, j, -1.0)],
                });
            }
        }
    }
    for br in &bounds.branches {
        if let Branch::Y { block, comp, sense, bound } = br {
            rows.push(MasterRow {
                kind: RowKind::Branching,
                sense: match sense {
                    BoundSense::Le => RowSense::Le,
                    BoundSense::Ge => RowSense::Ge,
                },
                rhs: *bound as f64,
                x: Vec::new(),
                y: vec![(*block, *comp, 1.0)],
            });
        }
    }
    rows
}

/// Dual values of the restricted master.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualPrices {
    /// One per linking row (complicating, shared-design and branching rows).
    pub pi: Vec<f64>,
    /// One per block convexity row.
    pub mu: Vec<f64>,
}

/// A built restricted master and the bookkeeping to read its solution.
#[derive(Clone, Debug)]
pub struct Rmp {
    pub lp: LinearProgram,
    pub rows: Vec<MasterRow>,
    /// Pool index of each `lambda` variable, in LP order after the `x` block.
    pub columns: Vec<usize>,
    pub num_x: usize,
    pub num_blocks: usize,
    pub artificials: usize,
    /// Per block and component: `(row, coefficient)` pairs.
    y_rows: Vec<Vec<Vec<(usize, f64)>>>,
}

impl Rmp {
    /// `lambda` variable `k` sits at LP column `num_x + k`.
    pub fn lambda_var(&self, k: usize) -> usize {
        self.num_x + k
    }

    pub fn convexity_row(&self, block: usize) -> usize {
        self.rows.len() + block
    }

    pub fn duals(&self, sol: &LpSolution) -> DualPrices {
        let r = self.rows.len();
        DualPrices { pi: sol.duals[..r].to_vec(), mu: sol.duals[r..r + self.num_blocks].to_vec() }
    }

    /// Pricing weights for block `i`: every linking-row dual times the row's
    /// coefficient on the block's design.
    pub fn block_duals(&self, duals: &DualPrices, i: usize) -> BlockDuals {
        let w = self.y_rows[i]
            .iter()
            .map(|entries| entries.iter().map(|&(r, c)| duals.pi[r] * c).sum())
            .collect();
        BlockDuals { w, mu: duals.mu[i] }
    }

    pub fn x<'a>(&self, sol: &'a LpSolution) -> &'a [f64] {
        &sol.x[..self.num_x]
    }

    /// `(pool index, value)` for every `lambda` variable.
    pub fn lambda(&self, sol: &LpSolution) -> Vec<(usize, f64)> {
        self.columns.iter().enumerate().map(|(k, &c)| (c, sol.x[self.num_x + k])).collect()
    }
}

/// Restricted master LP: `min c'x + sum cost_k lambda_k` over the active columns,
/// one convexity row per block (`= 1` or `<= 1`).
pub fn build_rmp_lp(model: &StructuredModel, bounds: &NodeBounds, pool: &ColumnPool, active: &[usize]) -> Rmp {
    build(model, bounds, pool, active, false)
}

/// Phase-one master: zero costs plus artificials of cost one that make every row satisfiable.
pub fn build_phase_one_lp(model: &StructuredModel, bounds: &NodeBounds, pool: &ColumnPool, active: &[usize]) -> Rmp {
    build(model, bounds, pool, active, true)
}

fn build(model: &StructuredModel, bounds: &NodeBounds, pool: &ColumnPool, active: &[usize], phase_one: bool) -> Rmp {
    let rows = master_rows(model, bounds);
    let nb = model.blocks.len();
    let mut y_rows: Vec<Vec<Vec<(usize, f64)>>> = model.blocks.iter().map(|b| vec![Vec::new(); b.p()]).collect();
    for (r, row) in rows.iter().enumerate() {
        for &(i, j, c) in &row.y {
            y_rows[i][j].push((r, c));
        }
    }

    let mut lp = LinearProgram::default();
    let (xlo, xhi) = bounds.x_box(model);
    for j in 0..model.num_x() {
        let c = if phase_one { 0.0 } else { model.cost[j] };
        lp.add_var(c, xlo[j], xhi[j]);
    }
    for row in &rows {
        lp.add_row(&row.x, row.sense, row.rhs);
    }
    for i in 0..nb {
        let sense = if bounds.forces_selection(model, i) { RowSense::Eq } else { RowSense::Le };
        lp.add_row(&[], sense, 1.0);
    }
    let conv0 = rows.len();
    for &k in active {
        let col = pool.get(k);
        let c = if phase_one { 0.0 } else { col.cost };
        let v = lp.add_var(c, 0.0, f64::INFINITY);
        for (j, &d) in col.design.iter().enumerate() {
            if d != 0 {
                for &(r, coef) in &y_rows[col.block][j] {
                    lp.set_coeff(r, v, coef * d as f64);
                }
            }
        }
        lp.set_coeff(conv0 + col.block, v, 1.0);
    }
    let mut artificials = 0;
    if phase_one {
        for r in 0..lp.num_rows() {
            let signs: &[f64] = match lp.senses[r] {
                RowSense::Ge => &[1.0],
                RowSense::Le => &[-1.0],
                RowSense::Eq => &[1.0, -1.0],
            };
            for &s in signs {
                let v = lp.add_var(1.0, 0.0, f64::INFINITY);
                lp.set_coeff(r, v, s);
                artificials += 1;
            }
        }
    }
    Rmp { lp, rows, columns: active.to_vec(), num_x: model.num_x(), num_blocks: nb, artificials, y_rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colgen::column::{Column, Provenance};
    use crate::lp::solve_lp;
    use crate::model::{tests::single_block, LinearVar, LinkingMatrix, Triplet};

    fn one_row_model() -> StructuredModel {
        let mut m = single_block(0, 3);
        m.x = vec![LinearVar { name: "s".into(), integer: false, upper: None }];
        m.cost = vec![10.0];
        m.rows = 1;
        m.a = vec![Triplet::new(0, 0, 1.0)];
        m.rhs = vec![2.5];
        m.blocks[0].linking = LinkingMatrix::new(1, vec![Triplet::new(0, 0, 1.0)]);
        m
    }

    fn pool_of(designs: &[(i64, f64)]) -> ColumnPool {
        let mut pool = ColumnPool::new();
        for &(d, c) in designs {
            pool.insert(Column { block: 0, design: vec![d], cost: c, provenance: Provenance::Initial, exact: true });
        }
        pool
    }

    #[test]
    fn construction_arithmetic() {
        let m = one_row_model();
        let pool = pool_of(&[(1, 1.0), (3, 1.0)]);
        let rmp = build_rmp_lp(&m, &NodeBounds::root(), &pool, &[0, 1]);
        assert_eq!(rmp.lp.num_vars(), 1 + 2);
        assert_eq!(rmp.lp.num_rows(), 2);
        assert_eq!(rmp.lp.senses[1], RowSense::Eq);
        let sol = solve_lp(&rmp.lp).unwrap();
        // 0.25 * 1 + 0.75 * 3 = 2.5 at cost 1
        assert!((sol.objective - 1.0).abs() < 1e-9);
        let d = rmp.duals(&sol);
        let bd = rmp.block_duals(&d, 0);
        for (k, &c) in rmp.columns.iter().enumerate() {
            let col = pool.get(c);
            if sol.x[rmp.lambda_var(k)] > 1e-9 {
                assert!(bd.reduced_cost(&col.design, col.cost).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn at_most_one_row_and_branching_row() {
        let mut m = one_row_model();
        m.blocks[0].convexity = Convexity::AtMostOne;
        let pool = pool_of(&[(1, 1.0), (3, 1.0)]);
        let node = NodeBounds::root().child(Branch::Y { block: 0, comp: 0, sense: BoundSense::Ge, bound: 2 });
        let rmp = build_rmp_lp(&m, &node, &pool, &[1]);
        assert_eq!(rmp.lp.num_rows(), 3);
        assert_eq!(rmp.lp.senses[1], RowSense::Ge);
        assert_eq!(rmp.lp.senses[2], RowSense::Le);
        assert!(!node.admits(&m, 0, &[1]));
        assert!(node.admits(&m, 0, &[3]));
        assert!(NodeBounds::root().admits(&m, 0, &[1]));
    }

    #[test]
    fn shared_design_rows() {
        let mut m = single_block(0, 3);
        m.blocks.push(m.blocks[0].clone());
        m.blocks.push(m.blocks[0].clone());
        m.nonanticipative = true;
        let rows = master_rows(&m, &NodeBounds::root());
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.sense == RowSense::Eq));
        let node = NodeBounds::root().child(Branch::Y { block: 0, comp: 0, sense: BoundSense::Le, bound: 1 });
        assert_eq!(node.y_box(&m, 2).1, vec![1]);
    }
}
