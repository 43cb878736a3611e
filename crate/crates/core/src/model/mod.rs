//! Block-structured MINLP instances.
//!
//! A [`StructuredModel`] is
//!
//! ```text
//! min  c'x + sum_i f_i(y_i, z_i)
//! s.t. A x + sum_i D_i y_i >= b
//!      g_i(y_i, z_i) <= 0          for every block i
//!      y_i integer and boxed, z_i boxed, x >= 0
//! ```
//!
//! Removing the complicating rows `A x + sum D_i y_i >= b` leaves independent
//! blocks, which is what the decomposition exploits.

mod expr;
pub mod flatten;
pub mod json;

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{EvalError, Expr};
pub use flatten::{flatten_fullspace, MonolithicMinlp};
pub use json::{load_instance, model_from_str, model_to_string, parse_instance, save_instance, InstanceError};

/// Sparse matrix entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Triplet {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Triplet { row, col, value }
    }
}

/// Linking matrix `D_i` with an explicit row count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkingMatrix {
    pub rows: usize,
    pub entries: Vec<Triplet>,
}

impl LinkingMatrix {
    pub fn new(rows: usize, entries: Vec<Triplet>) -> Self {
        LinkingMatrix { rows, entries }
    }

    /// `D_i * y` as a dense vector.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for t in &self.entries {
            out[t.row] += t.value * y[t.col];
        }
        out
    }

    pub fn apply_int(&self, y: &[i64]) -> Vec<f64> {
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        self.apply(&yf)
    }

    /// `D_i' * pi`, the per-component weight the pricing objective subtracts.
    pub fn transpose_apply(&self, pi: &[f64], p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for t in &self.entries {
            out[t.col] += t.value * pi[t.row];
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    /// exactly one column per block
    Equality,
    /// at most one column; choosing none means the block stays empty
    AtMostOne,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkingVar {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
    /// Entity size used by largest-entity-first branching.
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerVar {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub integer: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub y: Vec<LinkingVar>,
    pub z: Vec<InnerVar>,
    pub objective: Expr,
    /// Each expression is read as `g <= 0`.
    pub constraints: Vec<Expr>,
    pub linking: LinkingMatrix,
    pub convexity: Convexity,
    /// Closed-form candidates for the continuous `z` given `y`. Each candidate
    /// lists one expression (over `y` only) per continuous `z`, in order.
    pub z_candidates: Vec<Vec<Expr>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VarDomain {
    pub lo: f64,
    pub hi: f64,
    pub integer: bool,
}

impl Block {
    /// Number of linking components `p_i`.
    pub fn p(&self) -> usize {
        self.y.len()
    }

    pub fn nvars(&self) -> usize {
        self.y.len() + self.z.len()
    }

    pub fn has_continuous_z(&self) -> bool {
        self.z.iter().any(|v| !v.integer)
    }

    /// Domains of all block variables, `y` first.
    pub fn domains(&self) -> Vec<VarDomain> {
        self.y
            .iter()
            .map(|v| VarDomain { lo: v.lo as f64, hi: v.hi as f64, integer: true })
            .chain(self.z.iter().map(|v| VarDomain { lo: v.lo, hi: v.hi, integer: v.integer }))
            .collect()
    }

    pub fn y_lo(&self) -> Vec<i64> {
        self.y.iter().map(|v| v.lo).collect()
    }

    pub fn y_hi(&self) -> Vec<i64> {
        self.y.iter().map(|v| v.hi).collect()
    }

    pub fn contains_design(&self, design: &[i64]) -> bool {
        design.len() == self.p()
            && self
                .y
                .iter()
                .zip(design)
                .all(|(v, &d)| v.lo <= d && d <= v.hi)
    }

    /// Number of integer points in the `y` box.
    pub fn lattice_size(&self) -> u128 {
        self.y
            .iter()
            .map(|v| (v.hi - v.lo + 1).max(0) as u128)
            .product()
    }

    pub fn var_name(&self, idx: usize) -> &str {
        if idx < self.y.len() {
            &self.y[idx].name
        } else {
            &self.z[idx - self.y.len()].name
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearVar {
    pub name: String,
    pub integer: bool,
    /// `None` means unbounded above.
    pub upper: Option<f64>,
}

/// An instance-declared design with an optional closed-form cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedColumn {
    pub block: usize,
    pub design: Vec<i64>,
    pub cost: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructuredModel {
    pub name: String,
    pub x: Vec<LinearVar>,
    pub cost: Vec<f64>,
    /// Number of complicating rows.
    pub rows: usize,
    pub a: Vec<Triplet>,
    pub rhs: Vec<f64>,
    pub blocks: Vec<Block>,
    /// All blocks are scenario copies of one shared design.
    pub nonanticipative: bool,
    /// Feasibility is monotone in `y`: adding capacity never hurts.
    pub monotone: bool,
    pub seed_columns: Vec<SeedColumn>,
}

impl StructuredModel {
    pub fn num_x(&self) -> usize {
        self.x.len()
    }

    /// `A x` as a dense vector.
    pub fn apply_a(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for t in &self.a {
            out[t.row] += t.value * x[t.col];
        }
        out
    }

    pub fn total_lattice_size(&self) -> u128 {
        self.blocks.iter().map(Block::lattice_size).sum()
    }

    pub fn is_pure_integer(&self) -> bool {
        self.blocks.iter().all(|b| !b.has_continuous_z())
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("cost vector has {got} entries but the model declares {expected} x-variables")]
    CostDimension { expected: usize, got: usize },
    #[error("right-hand side has {got} entries but A has {expected} rows")]
    RhsDimension { expected: usize, got: usize },
    #[error("A entry ({row}, {col}) outside the {rows}x{cols} matrix")]
    ComplicatingEntry { row: usize, col: usize, rows: usize, cols: usize },
    #[error("x-variable `{name}` has an invalid upper bound {upper}")]
    XBound { name: String, upper: f64 },
    #[error("block {block}: linking matrix row mismatch ({got} rows, model has {expected})")]
    LinkingRows { block: usize, expected: usize, got: usize },
    #[error("block {block}: linking entry ({row}, {col}) out of range")]
    LinkingEntry { block: usize, row: usize, col: usize },
    #[error("block {block}: empty y box for `{var}` ({lo} > {hi})")]
    EmptyYBox { block: usize, var: String, lo: i64, hi: i64 },
    #[error("block {block}: unbounded or empty z box for `{var}`")]
    BadZBox { block: usize, var: String },
    #[error("block {block}: dangling variable reference {index} in {place}")]
    DanglingVar { block: usize, index: usize, place: String },
    #[error("block {block}: division by the constant zero in {place}")]
    ZeroDivisor { block: usize, place: String },
    #[error("block {block}: non-finite constant in {place}")]
    NonFiniteConstant { block: usize, place: String },
    #[error("block {block}: z candidate {candidate} is malformed")]
    BadCandidate { block: usize, candidate: usize },
    #[error("non-anticipativity requires identical design spaces; block {block} differs from block 0")]
    NonanticipativityShape { block: usize },
    #[error("seed column {index} is invalid: {reason}")]
    SeedColumn { index: usize, reason: String },
}

/// A model whose invariants have been checked. Immutable.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedModel(StructuredModel);

impl ValidatedModel {
    pub fn into_inner(self) -> StructuredModel {
        self.0
    }

    pub fn model(&self) -> &StructuredModel {
        &self.0
    }
}

impl Deref for ValidatedModel {
    type Target = StructuredModel;
    fn deref(&self) -> &StructuredModel {
        &self.0
    }
}

impl fmt::Display for ValidatedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} x-vars, {} complicating rows, {} blocks",
            self.0.name,
            self.0.x.len(),
            self.0.rows,
            self.0.blocks.len()
        )
    }
}

fn check_expr(e: &Expr, nvars: usize, block: usize, place: &str, errs: &mut Vec<ModelError>) {
    if let Some(m) = e.max_var() {
        if m >= nvars {
            errs.push(ModelError::DanglingVar { block, index: m, place: place.to_string() });
        }
    }
    fn walk(e: &Expr, block: usize, place: &str, errs: &mut Vec<ModelError>) {
        match e {
            Expr::Const(c) if !c.is_finite() => {
                errs.push(ModelError::NonFiniteConstant { block, place: place.to_string() })
            }
            Expr::Div(_, d) if matches!(**d, Expr::Const(c) if c == 0.0) => {
                errs.push(ModelError::ZeroDivisor { block, place: place.to_string() })
            }
            _ => {}
        }
        for c in e.children() {
            walk(c, block, place, errs);
        }
    }
    walk(e, block, place, errs);
}

/// Checks every invariant and returns either the validated model or all violations.
pub fn validate_model(model: StructuredModel) -> Result<ValidatedModel, Vec<ModelError>> {
    let mut errs = Vec::new();
    let nx = model.x.len();
    if model.cost.len() != nx {
        errs.push(ModelError::CostDimension { expected: nx, got: model.cost.len() });
    }
    if model.rhs.len() != model.rows {
        errs.push(ModelError::RhsDimension { expected: model.rows, got: model.rhs.len() });
    }
    for t in &model.a {
        if t.row >= model.rows || t.col >= nx {
            errs.push(ModelError::ComplicatingEntry {
                row: t.row,
                col: t.col,
                rows: model.rows,
                cols: nx,
            });
        }
    }
    for v in &model.x {
        if let Some(u) = v.upper {
            if !(u >= 0.0) || u.is_infinite() {
                errs.push(ModelError::XBound { name: v.name.clone(), upper: u });
            }
        }
    }
    for (bi, b) in model.blocks.iter().enumerate() {
        if b.linking.rows != model.rows {
            errs.push(ModelError::LinkingRows {
                block: bi,
                expected: model.rows,
                got: b.linking.rows,
            });
        }
        for t in &b.linking.entries {
            if t.row >= b.linking.rows || t.col >= b.p() {
                errs.push(ModelError::LinkingEntry { block: bi, row: t.row, col: t.col });
            }
        }
        for v in &b.y {
            if v.lo > v.hi {
                errs.push(ModelError::EmptyYBox { block: bi, var: v.name.clone(), lo: v.lo, hi: v.hi });
            }
        }
        for v in &b.z {
            let ok = v.lo.is_finite()
                && v.hi.is_finite()
                && v.lo <= v.hi
                && (!v.integer || v.lo.ceil() <= v.hi.floor());
            if !ok {
                errs.push(ModelError::BadZBox { block: bi, var: v.name.clone() });
            }
        }
        let n = b.nvars();
        check_expr(&b.objective, n, bi, "objective", &mut errs);
        for (k, g) in b.constraints.iter().enumerate() {
            check_expr(g, n, bi, &format!("constraint {k}"), &mut errs);
        }
        let n_cont = b.z.iter().filter(|v| !v.integer).count();
        for (k, cand) in b.z_candidates.iter().enumerate() {
            let bad = cand.len() != n_cont
                || cand.iter().any(|e| e.max_var().is_some_and(|m| m >= b.p()));
            if bad {
                errs.push(ModelError::BadCandidate { block: bi, candidate: k });
            }
        }
    }
    if model.nonanticipative {
        if let Some(first) = model.blocks.first() {
            for (bi, b) in model.blocks.iter().enumerate().skip(1) {
                let same = b.p() == first.p()
                    && b.y_lo() == first.y_lo()
                    && b.y_hi() == first.y_hi()
                    && b.linking.rows == first.linking.rows;
                if !same {
                    errs.push(ModelError::NonanticipativityShape { block: bi });
                }
            }
        }
    }
    for (k, s) in model.seed_columns.iter().enumerate() {
        let reason = match model.blocks.get(s.block) {
            None => Some("unknown block".to_string()),
            Some(b) if !b.contains_design(&s.design) => Some("design outside the y box".to_string()),
            _ => match s.cost {
                Some(c) if !c.is_finite() => Some("non-finite cost".to_string()),
                _ => None,
            },
        };
        if let Some(reason) = reason {
            errs.push(ModelError::SeedColumn { index: k, reason });
        }
    }
    if errs.is_empty() {
        Ok(ValidatedModel(model))
    } else {
        Err(errs)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn single_block(lo: i64, hi: i64) -> StructuredModel {
        StructuredModel {
            name: "single".into(),
            x: vec![],
            cost: vec![],
            rows: 0,
            a: vec![],
            rhs: vec![],
            blocks: vec![Block {
                name: "b0".into(),
                y: vec![LinkingVar { name: "y0".into(), lo, hi, weight: None }],
                z: vec![],
                objective: Expr::sqr(Expr::sub(Expr::var(0), Expr::constant(2.0))),
                constraints: vec![],
                linking: LinkingMatrix::new(0, vec![]),
                convexity: Convexity::Equality,
                z_candidates: vec![],
            }],
            nonanticipative: false,
            monotone: false,
            seed_columns: vec![],
        }
    }

    #[test]
    fn single_block_is_valid() {
        assert!(validate_model(single_block(0, 3)).is_ok());
    }

    #[test]
    fn empty_y_box() {
        let errs = validate_model(single_block(2, 1)).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].to_string().contains("empty y box"));
    }

    #[test]
    fn linking_row_mismatch() {
        let mut m = single_block(0, 3);
        m.rows = 1;
        m.rhs = vec![1.0];
        m.blocks[0].linking = LinkingMatrix::new(2, vec![Triplet::new(0, 0, 1.0)]);
        let errs = validate_model(m).unwrap_err();
        assert!(errs.iter().any(|e| e.to_string().contains("linking matrix row mismatch")));
    }

    #[test]
    fn reports_every_violation() {
        let mut m = single_block(2, 1);
        m.blocks[0].constraints.push(Expr::var(7));
        m.blocks[0].z.push(InnerVar { name: "z".into(), lo: 0.0, hi: f64::INFINITY, integer: false });
        m.blocks[0].objective = Expr::div(Expr::var(0), Expr::constant(0.0));
        let errs = validate_model(m).unwrap_err();
        assert!(errs.iter().any(|e| matches!(e, ModelError::EmptyYBox { .. })));
        assert!(errs.iter().any(|e| matches!(e, ModelError::DanglingVar { index: 7, .. })));
        assert!(errs.iter().any(|e| matches!(e, ModelError::BadZBox { .. })));
        assert!(errs.iter().any(|e| matches!(e, ModelError::ZeroDivisor { .. })));
    }

    #[test]
    fn validation_is_idempotent() {
        let v = validate_model(single_block(0, 3)).unwrap();
        let again = validate_model(v.clone().into_inner()).unwrap();
        assert_eq!(v, again);
    }

    #[test]
    fn nonanticipativity_needs_same_shape() {
        let mut m = single_block(0, 3);
        let mut b = m.blocks[0].clone();
        b.y[0].hi = 4;
        m.blocks.push(b);
        m.nonanticipative = true;
        let errs = validate_model(m).unwrap_err();
        assert_eq!(errs, vec![ModelError::NonanticipativityShape { block: 1 }]);
    }

    #[test]
    fn linking_matrix_products() {
        let d = LinkingMatrix::new(2, vec![Triplet::new(0, 0, 2.0), Triplet::new(1, 1, -1.0), Triplet::new(1, 0, 1.0)]);
        assert_eq!(d.apply_int(&[3, 4]), vec![6.0, -1.0]);
        assert_eq!(d.transpose_apply(&[1.0, 2.0], 2), vec![4.0, -2.0]);
    }
}
