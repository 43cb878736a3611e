//! Assembly of the undecomposed problem, used by the full-space oracle.

use super::{Expr, StructuredModel, VarDomain};

#[derive(Clone, Debug)]
pub struct MonolithicMinlp {
    pub names: Vec<String>,
    pub domains: Vec<VarDomain>,
    pub objective: Expr,
    /// `g <= 0`; complicating rows come first, then block constraints in block order.
    pub inequalities: Vec<Expr>,
    /// `h = 0`; only emitted for non-anticipativity.
    pub equalities: Vec<Expr>,
    pub num_complicating: usize,
    /// Index of the first variable of each block (its `y`, then its `z`).
    pub block_offsets: Vec<usize>,
}

impl MonolithicMinlp {
    pub fn nvars(&self) -> usize {
        self.domains.len()
    }

    /// Splits a flat point into `x` and per-block variable slices.
    pub fn split<'a>(&self, point: &'a [f64], model: &StructuredModel) -> (&'a [f64], Vec<&'a [f64]>) {
        let x = &point[..model.num_x()];
        let blocks = model
            .blocks
            .iter()
            .zip(&self.block_offsets)
            .map(|(b, &off)| &point[off..off + b.nvars()])
            .collect();
        (x, blocks)
    }
}

/// Flattens `(x, y_1, z_1, ..., y_n, z_n)` into one MINLP.
pub fn flatten_fullspace(model: &StructuredModel) -> MonolithicMinlp {
    let nx = model.num_x();
    let mut names: Vec<String> = model.x.iter().map(|v| v.name.clone()).collect();
    let mut domains: Vec<VarDomain> = model
        .x
        .iter()
        .map(|v| VarDomain { lo: 0.0, hi: v.upper.unwrap_or(f64::INFINITY), integer: v.integer })
        .collect();
    let mut block_offsets = Vec::with_capacity(model.blocks.len());
    for b in &model.blocks {
        block_offsets.push(domains.len());
        for i in 0..b.nvars() {
            names.push(format!("{}.{}", b.name, b.var_name(i)));
        }
        domains.extend(b.domains());
    }

    let mut obj_terms: Vec<Expr> = model
        .cost
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, &c)| Expr::scaled_var(c, j))
        .collect();
    for (b, &off) in model.blocks.iter().zip(&block_offsets) {
        obj_terms.push(b.objective.remap_vars(&|i| i + off));
    }

    // b_r - (A x + sum D_i y_i)_r <= 0
    let mut row_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.rows];
    for t in &model.a {
        row_terms[t.row].push((t.col, -t.value));
    }
    for (b, &off) in model.blocks.iter().zip(&block_offsets) {
        for t in &b.linking.entries {
            row_terms[t.row].push((off + t.col, -t.value));
        }
    }
    let mut inequalities: Vec<Expr> = row_terms
        .iter()
        .zip(&model.rhs)
        .map(|(terms, &rhs)| Expr::linear(rhs, terms))
        .collect();
    for (b, &off) in model.blocks.iter().zip(&block_offsets) {
        inequalities.extend(b.constraints.iter().map(|g| g.remap_vars(&|i| i + off)));
    }

    let mut equalities = Vec::new();
    if model.nonanticipative {
        for w in block_offsets.windows(2) {
            let p = model.blocks[0].p();
            for j in 0..p {
                equalities.push(Expr::linear(0.0, &[(w[0] + j, 1.0), (w[1] + j, -1.0)]));
            }
        }
    }

    debug_assert_eq!(names.len(), domains.len());
    debug_assert!(nx <= domains.len());
    MonolithicMinlp {
        names,
        domains,
        objective: Expr::sum(obj_terms),
        inequalities,
        equalities,
        num_complicating: model.rows,
        block_offsets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tests::single_block, LinearVar, LinkingMatrix, Triplet};

    fn two_blocks() -> StructuredModel {
        let mut m = single_block(0, 3);
        m.x = vec![LinearVar { name: "x0".into(), integer: false, upper: Some(5.0) }];
        m.cost = vec![2.0];
        m.rows = 1;
        m.rhs = vec![3.0];
        m.a = vec![Triplet::new(0, 0, 1.0)];
        m.blocks[0].linking = LinkingMatrix::new(1, vec![Triplet::new(0, 0, 1.0)]);
        m.blocks[0].constraints.push(Expr::linear(-1.0, &[(0, 1.0)]));
        let mut b = m.blocks[0].clone();
        b.name = "b1".into();
        b.constraints.clear();
        m.blocks.push(b);
        m
    }

    #[test]
    fn dimension_bookkeeping() {
        let m = two_blocks();
        let f = flatten_fullspace(&m);
        assert_eq!(f.nvars(), 1 + 2);
        assert_eq!(f.inequalities.len(), 1 + 1);
        assert!(f.equalities.is_empty());
        assert_eq!(f.block_offsets, vec![1, 2]);
    }

    #[test]
    fn objective_is_additive() {
        let m = two_blocks();
        let f = flatten_fullspace(&m);
        let pt = [1.5, 2.0, 0.0];
        let expect = 2.0 * 1.5 + (2.0f64 - 2.0).powi(2) + (0.0f64 - 2.0).powi(2);
        assert_eq!(f.objective.eval(&pt), Ok(expect));
        // row: 3 - (x + y0 + y1) <= 0
        assert_eq!(f.inequalities[0].eval(&pt), Ok(3.0 - 3.5));
    }

    #[test]
    fn nonanticipativity_rows() {
        let mut m = single_block(0, 3);
        let y0 = m.blocks[0].y[0].clone();
        m.blocks[0].y.push(y0);
        m.blocks[0].y[1].name = "y1".into();
        m.blocks.push(m.blocks[0].clone());
        m.blocks.push(m.blocks[0].clone());
        m.nonanticipative = true;
        let f = flatten_fullspace(&m);
        assert_eq!(f.equalities.len(), 2 * (3 - 1));
        let pt = [1.0, 2.0, 1.0, 2.0, 1.0, 3.0];
        let vals: Vec<f64> = f.equalities.iter().map(|h| h.eval(&pt).unwrap()).collect();
        assert_eq!(vals, vec![0.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn single_block_without_rows() {
        let m = single_block(0, 3);
        let f = flatten_fullspace(&m);
        assert_eq!(f.nvars(), 1);
        assert!(f.inequalities.is_empty());
        assert_eq!(f.objective, m.blocks[0].objective);
    }
}
