//! Cuts removing designs proven infeasible from block subproblems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Block, Expr, InnerVar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutStyle {
    NoGood,
    MonotoneStage,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CutError {
    #[error("monotone-stage cuts need a model declared monotone in y")]
    NotMonotone,
    #[error("design has {got} components, block has {expected}")]
    DesignShape { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutOutcome {
    Added,
    Duplicate,
}

/// `sum coef * var >= rhs` over block variable indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCut {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearCut {
    /// The same inequality as a `g <= 0` constraint.
    pub fn to_constraint(&self) -> Expr {
        let neg: Vec<(usize, f64)> = self.terms.iter().map(|&(v, c)| (v, -c)).collect();
        Expr::linear(self.rhs, &neg)
    }

    pub fn is_satisfied(&self, point: &[f64]) -> bool {
        self.terms.iter().map(|&(v, c)| c * point[v]).sum::<f64>() >= self.rhs - 1e-9
    }
}

fn is_binary(block: &Block) -> bool {
    block.y.iter().all(|v| v.lo >= 0 && v.hi <= 1)
}

/// `sum_{d_j = 1} (1 - y_j) + sum_{d_j = 0} y_j >= 1`.
pub fn binary_no_good(design: &[i64]) -> LinearCut {
    let ones = design.iter().filter(|&&d| d == 1).count() as f64;
    let terms = design.iter().enumerate().map(|(j, &d)| (j, if d == 1 { -1.0 } else { 1.0 })).collect();
    LinearCut { terms, rhs: 1.0 - ones }
}

/// Constraint excluding exactly the lattice point `design`: the linear form on
/// binary boxes, `1 - ||y - d||^2 <= 0` otherwise.
pub fn no_good_constraint(block: &Block, design: &[i64]) -> Expr {
    if is_binary(block) {
        binary_no_good(design).to_constraint()
    } else {
        let sq: Vec<Expr> = design
            .iter()
            .enumerate()
            .map(|(j, &d)| Expr::sqr(Expr::linear(-(d as f64), &[(j, 1.0)])))
            .collect();
        Expr::sub(Expr::constant(1.0), Expr::sum(sq))
    }
}

fn aux_name(design: &[i64], j: usize) -> String {
    let tag: Vec<String> = design.iter().map(i64::to_string).collect();
    format!("stage_cut[{}].{}", tag.join(","), j)
}

/// Stage cut rows `N_j + c_j z_j >= N_j^inf + 1` and `sum z_j <= |J| - 1` with
/// `c_j = N_j^inf + 1 - N_j^min`; the auxiliary binaries start at variable `first_aux`.
pub fn monotone_stage_cut(block: &Block, design: &[i64], first_aux: usize) -> Vec<LinearCut> {
    let mut cuts: Vec<LinearCut> = design
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let c = (n + 1 - block.y[j].lo) as f64;
            LinearCut { terms: vec![(j, 1.0), (first_aux + j, c)], rhs: (n + 1) as f64 }
        })
        .collect();
    cuts.push(LinearCut {
        terms: (0..design.len()).map(|j| (first_aux + j, -1.0)).collect(),
        rhs: -((design.len() as f64) - 1.0),
    });
    cuts
}

/// Appends a cut excluding `design` to the block. Repeating a cut is a no-op.
pub fn add_infeasibility_cut(
    block: &mut Block,
    design: &[i64],
    style: CutStyle,
    monotone: bool,
) -> Result<CutOutcome, CutError> {
    if design.len() != block.p() {
        return Err(CutError::DesignShape { expected: block.p(), got: design.len() });
    }
    match style {
        CutStyle::NoGood => {
            let g = no_good_constraint(block, design);
            if block.constraints.contains(&g) {
                return Ok(CutOutcome::Duplicate);
            }
            block.constraints.push(g);
        }
        CutStyle::MonotoneStage => {
            if !monotone {
                return Err(CutError::NotMonotone);
            }
            if block.z.iter().any(|v| v.name == aux_name(design, 0)) {
                return Ok(CutOutcome::Duplicate);
            }
            let first = block.nvars();
            for j in 0..design.len() {
                block.z.push(InnerVar { name: aux_name(design, j), lo: 0.0, hi: 1.0, integer: true });
            }
            let cuts = monotone_stage_cut(block, design, first);
            block.constraints.extend(cuts.iter().map(LinearCut::to_constraint));
            // z_candidates describe continuous variables only, so they stay valid
        }
    }
    Ok(CutOutcome::Added)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tests::single_block, LinkingVar};

    fn two_stage(lo: i64, hi: i64) -> Block {
        let mut b = single_block(lo, hi).blocks.remove(0);
        b.y.push(LinkingVar { name: "y1".into(), lo, hi, weight: None });
        b
    }

    #[test]
    fn binary_no_good_canonical_form() {
        let cut = binary_no_good(&[1, 0]);
        assert_eq!(cut, LinearCut { terms: vec![(0, -1.0), (1, 1.0)], rhs: 0.0 });
        let b = two_stage(0, 1);
        let g = no_good_constraint(&b, &[1, 0]);
        for (y0, y1) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let excluded = g.eval(&[y0, y1]).unwrap() > 0.0;
            assert_eq!(excluded, (y0, y1) == (1.0, 0.0));
        }
    }

    #[test]
    fn integer_no_good_excludes_one_point() {
        let b = two_stage(0, 3);
        let g = no_good_constraint(&b, &[2, 1]);
        for a in 0..4 {
            for c in 0..4 {
                assert_eq!(g.eval(&[a as f64, c as f64]).unwrap() > 0.0, (a, c) == (2, 1));
            }
        }
    }

    #[test]
    fn stage_cut_coefficients() {
        let b = two_stage(1, 4);
        let cuts = monotone_stage_cut(&b, &[2, 1], 2);
        assert_eq!(
            cuts,
            vec![
                LinearCut { terms: vec![(0, 1.0), (2, 2.0)], rhs: 3.0 },
                LinearCut { terms: vec![(1, 1.0), (3, 1.0)], rhs: 2.0 },
                LinearCut { terms: vec![(2, -1.0), (3, -1.0)], rhs: -1.0 },
            ]
        );
    }

    #[test]
    fn stage_cut_needs_monotone_flag_and_is_idempotent() {
        let mut b = two_stage(1, 4);
        assert_eq!(add_infeasibility_cut(&mut b, &[2, 1], CutStyle::MonotoneStage, false), Err(CutError::NotMonotone));
        assert_eq!(add_infeasibility_cut(&mut b, &[2, 1], CutStyle::MonotoneStage, true), Ok(CutOutcome::Added));
        let n = b.constraints.len();
        assert_eq!(add_infeasibility_cut(&mut b, &[2, 1], CutStyle::MonotoneStage, true), Ok(CutOutcome::Duplicate));
        assert_eq!(b.constraints.len(), n);
        assert_eq!(b.z.len(), 2);
        assert_eq!(add_infeasibility_cut(&mut b, &[2, 2], CutStyle::NoGood, false), Ok(CutOutcome::Added));
        assert_eq!(add_infeasibility_cut(&mut b, &[2, 2], CutStyle::NoGood, false), Ok(CutOutcome::Duplicate));
    }
}
