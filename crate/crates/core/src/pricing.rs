//! Block subproblems: reduced-cost minimization and fixed-design costing.

use thiserror::Error;

use crate::global::{solve_global, Candidate, GlobalOptions, GlobalProblem, GlobalResult, GlobalStatus, SearchStats};
use crate::model::{Block, Expr};

/// Linear weights on a block's `y` and its convexity dual.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDuals {
    pub w: Vec<f64>,
    pub mu: f64,
}

impl BlockDuals {
    pub fn zero(p: usize) -> Self {
        BlockDuals { w: vec![0.0; p], mu: 0.0 }
    }

    /// Weights `D_i' pi` from complicating-row duals.
    pub fn from_rows(block: &Block, pi: &[f64], mu: f64) -> Self {
        BlockDuals { w: block.linking.transpose_apply(pi, block.p()), mu }
    }

    /// Reduced cost of a column with the given design and cost.
    pub fn reduced_cost(&self, design: &[i64], cost: f64) -> f64 {
        cost - self.w.iter().zip(design).map(|(w, &y)| w * y as f64).sum::<f64>() - self.mu
    }

    pub fn weighted(&self, design: &[i64]) -> f64 {
        self.w.iter().zip(design).map(|(w, &y)| w * y as f64).sum()
    }
}

/// `f_i - (D_i' pi)' y - mu`.
pub fn build_pricing_objective(block: &Block, pi: &[f64], mu: f64) -> Expr {
    pricing_objective(block, &BlockDuals::from_rows(block, pi, mu))
}

/// `f_i - w' y - mu`, or `-w' y - mu` with `feasibility_only`.
fn objective_with(block: &Block, duals: &BlockDuals, feasibility_only: bool) -> Expr {
    let terms: Vec<(usize, f64)> = duals.w.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(j, &w)| (j, -w)).collect();
    let lin = Expr::linear(-duals.mu, &terms);
    if feasibility_only {
        lin
    } else if terms.is_empty() && duals.mu == 0.0 {
        block.objective.clone()
    } else {
        Expr::sum(vec![block.objective.clone(), lin])
    }
}

pub fn pricing_objective(block: &Block, duals: &BlockDuals) -> Expr {
    objective_with(block, duals, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PricingMode {
    Exact,
    /// Stop after this many search nodes and report bounds.
    Budget(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PricingStatus {
    Optimal,
    BoundsOnly,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct PricingResult {
    pub status: PricingStatus,
    /// Block point `(y, z)` of the incumbent.
    pub point: Option<Vec<f64>>,
    /// Incumbent reduced cost, `+inf` without one.
    pub u: f64,
    /// Valid lower bound on the reduced-cost minimum.
    pub l: f64,
    pub stats: SearchStats,
}

impl PricingResult {
    pub fn design(&self, p: usize) -> Option<Vec<i64>> {
        self.point.as_ref().map(|pt| pt[..p].iter().map(|v| v.round() as i64).collect())
    }
}

fn block_problem(block: &Block, objective: Expr) -> GlobalProblem {
    let p = block.p();
    let cont: Vec<usize> = block.z.iter().enumerate().filter(|(_, v)| !v.integer).map(|(k, _)| p + k).collect();
    let candidates = block
        .z_candidates
        .iter()
        .filter(|c| c.len() == cont.len())
        .map(|c| Candidate { assigns: cont.iter().copied().zip(c.iter().cloned()).collect() })
        .collect();
    GlobalProblem {
        domains: block.domains(),
        objective,
        inequalities: block.constraints.clone(),
        equalities: Vec::new(),
        candidates,
    }
}

fn to_pricing(r: GlobalResult) -> PricingResult {
    let status = match r.status {
        GlobalStatus::Optimal => PricingStatus::Optimal,
        GlobalStatus::BoundsOnly => PricingStatus::BoundsOnly,
        GlobalStatus::Infeasible => PricingStatus::Infeasible,
    };
    PricingResult { status, point: r.point, u: r.upper, l: r.lower, stats: r.stats }
}

fn options(mode: PricingMode) -> GlobalOptions {
    match mode {
        PricingMode::Exact => GlobalOptions::exact(),
        PricingMode::Budget(n) => GlobalOptions::with_budget(n),
    }
}

/// Minimizes the block's reduced cost over its feasible set.
pub fn solve_pricing(block: &Block, duals: &BlockDuals, mode: PricingMode) -> PricingResult {
    to_pricing(solve_global(&block_problem(block, pricing_objective(block, duals)), &options(mode)))
}

/// Pricing with the block cost replaced by zero, as used to restore master feasibility.
pub fn solve_feasibility_pricing(block: &Block, duals: &BlockDuals, mode: PricingMode) -> PricingResult {
    to_pricing(solve_global(&block_problem(block, objective_with(block, duals, true)), &options(mode)))
}

/// Cheapest completion of a fixed design: `min_z f(y, z)` over the block constraints.
pub fn solve_fixed_design(block: &Block, design: &[i64]) -> PricingResult {
    let mut fixed = block.clone();
    for (v, &d) in fixed.y.iter_mut().zip(design) {
        v.lo = d;
        v.hi = d;
    }
    solve_pricing(&fixed, &BlockDuals::zero(block.p()), PricingMode::Exact)
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("block `{0}` has continuous variables without closed-form candidates")]
    FreeContinuous(String),
    #[error("block `{0}` lattice has {1} points, too many to scan")]
    TooLarge(String, u128),
}

/// Exhaustive lattice minimum.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeResult {
    /// `+inf` when no lattice point is feasible.
    pub zeta: f64,
    pub point: Option<Vec<f64>>,
    pub scanned: u64,
}

impl LatticeResult {
    pub fn design(&self, p: usize) -> Option<Vec<i64>> {
        self.point.as_ref().map(|pt| pt[..p].iter().map(|v| *v as i64).collect())
    }
}

const LATTICE_CAP: u128 = 50_000_000;
const FEAS_TOL: f64 = 1e-8;

/// Integer ranges of `y` then the integer `z`.
fn lattice_ranges(block: &Block) -> Vec<(i64, i64)> {
    block
        .y
        .iter()
        .map(|v| (v.lo, v.hi))
        .chain(block.z.iter().filter(|v| v.integer).map(|v| (v.lo.ceil() as i64, v.hi.floor() as i64)))
        .collect()
}

fn scan(block: &Block, objective: &Expr) -> Result<LatticeResult, LatticeError> {
    if block.has_continuous_z() && block.z_candidates.is_empty() {
        return Err(LatticeError::FreeContinuous(block.name.clone()));
    }
    let ranges = lattice_ranges(block);
    let size: u128 = ranges.iter().map(|&(lo, hi)| (hi - lo + 1).max(0) as u128).product();
    if size > LATTICE_CAP {
        return Err(LatticeError::TooLarge(block.name.clone(), size));
    }
    let p = block.p();
    let int_z: Vec<usize> = block.z.iter().enumerate().filter(|(_, v)| v.integer).map(|(k, _)| p + k).collect();
    let cont_z: Vec<usize> = block.z.iter().enumerate().filter(|(_, v)| !v.integer).map(|(k, _)| p + k).collect();
    let mut best = LatticeResult { zeta: f64::INFINITY, point: None, scanned: 0 };
    if size == 0 {
        return Ok(best);
    }
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut point = vec![0.0; block.nvars()];
    loop {
        for (j, &v) in idx.iter().enumerate().take(p) {
            point[j] = v as f64;
        }
        for (k, &var) in int_z.iter().enumerate() {
            point[var] = idx[p + k] as f64;
        }
        if cont_z.is_empty() {
            consider(block, objective, &point, &mut best);
        } else {
            for cand in &block.z_candidates {
                let mut pt = point.clone();
                let mut ok = cand.len() == cont_z.len();
                for (e, &var) in cand.iter().zip(&cont_z) {
                    match e.eval(&point) {
                        Ok(v) => {
                            let d = &block.z[var - p];
                            ok &= v >= d.lo - FEAS_TOL && v <= d.hi + FEAS_TOL;
                            pt[var] = v.clamp(d.lo, d.hi);
                        }
                        Err(_) => ok = false,
                    }
                }
                if ok {
                    consider(block, objective, &pt, &mut best);
                }
            }
        }
        best.scanned += 1;
        // odometer, last component fastest
        let mut k = ranges.len();
        loop {
            if k == 0 {
                return Ok(best);
            }
            k -= 1;
            if idx[k] < ranges[k].1 {
                idx[k] += 1;
                break;
            }
            idx[k] = ranges[k].0;
        }
    }
}

fn consider(block: &Block, objective: &Expr, point: &[f64], best: &mut LatticeResult) {
    for g in &block.constraints {
        match g.eval(point) {
            Ok(v) if v <= FEAS_TOL => {}
            _ => return,
        }
    }
    if let Ok(v) = objective.eval(point) {
        if v < best.zeta {
            best.zeta = v;
            best.point = Some(point.to_vec());
        }
    }
}

/// Exact reduced-cost minimum by scanning every lattice point in lexicographic
/// order; ties keep the first point found.
pub fn enumerate_lattice(block: &Block, duals: &BlockDuals) -> Result<LatticeResult, LatticeError> {
    scan(block, &pricing_objective(block, duals))
}

/// Exact cost of one design by enumeration of its completions.
pub fn enumerate_design_cost(block: &Block, design: &[i64]) -> Result<LatticeResult, LatticeError> {
    let mut fixed = block.clone();
    for (v, &d) in fixed.y.iter_mut().zip(design) {
        v.lo = d;
        v.hi = d;
    }
    scan(&fixed, &fixed.objective.clone())
}

/// Every feasible design of a block with its exact cost, in lexicographic order.
pub fn enumerate_designs(block: &Block) -> Result<Vec<(Vec<i64>, f64)>, LatticeError> {
    if block.has_continuous_z() && block.z_candidates.is_empty() {
        return Err(LatticeError::FreeContinuous(block.name.clone()));
    }
    let size = block.lattice_size();
    if size > LATTICE_CAP {
        return Err(LatticeError::TooLarge(block.name.clone(), size));
    }
    let mut out = Vec::new();
    let mut idx = block.y_lo();
    let hi = block.y_hi();
    if idx.iter().zip(&hi).any(|(l, h)| l > h) {
        return Ok(out);
    }
    loop {
        let r = enumerate_design_cost(block, &idx)?;
        if r.point.is_some() {
            out.push((idx.clone(), r.zeta));
        }
        let mut k = idx.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            if idx[k] < hi[k] {
                idx[k] += 1;
                break;
            }
            idx[k] = block.y[k].lo;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tests::single_block, Convexity, InnerVar, LinkingMatrix, LinkingVar, Triplet};

    fn parabola() -> Block {
        single_block(0, 3).blocks.remove(0)
    }

    fn with_row(mut b: Block) -> Block {
        b.linking = LinkingMatrix::new(1, vec![Triplet::new(0, 0, 1.0)]);
        b
    }

    #[test]
    fn objective_with_duals() {
        let mut b = with_row(parabola());
        b.objective = Expr::sqr(Expr::var(0));
        let e = build_pricing_objective(&b, &[2.0], 3.0);
        assert_eq!(e.eval(&[1.0]), Ok(-4.0));
        let e0 = build_pricing_objective(&b, &[0.0], 0.0);
        for y in 0..4 {
            assert_eq!(e0.eval(&[y as f64]), b.objective.eval(&[y as f64]));
        }
    }

    #[test]
    fn parabola_with_dual_weight() {
        let mut b = with_row(parabola());
        b.objective = Expr::sqr(Expr::var(0));
        let duals = BlockDuals::from_rows(&b, &[2.0], 0.0);
        let r = solve_pricing(&b, &duals, PricingMode::Exact);
        assert_eq!(r.status, PricingStatus::Optimal);
        assert_eq!(r.u, -1.0);
        assert_eq!(r.design(1), Some(vec![1]));
        let e = enumerate_lattice(&b, &duals).unwrap();
        assert_eq!(e.zeta, -1.0);
    }

    #[test]
    fn zero_and_unit_convexity_dual() {
        let b = parabola();
        let r = solve_pricing(&b, &BlockDuals::zero(1), PricingMode::Exact);
        assert_eq!((r.u, r.design(1)), (0.0, Some(vec![2])));
        let r = solve_pricing(&b, &BlockDuals { w: vec![0.0], mu: 1.0 }, PricingMode::Exact);
        assert_eq!(r.u, -1.0);
    }

    fn bilinear_block() -> Block {
        let mut b = parabola();
        b.y = vec![
            LinkingVar { name: "y1".into(), lo: 0, hi: 3, weight: None },
            LinkingVar { name: "y2".into(), lo: 0, hi: 3, weight: None },
        ];
        b.objective = Expr::sub(Expr::mul(Expr::var(0), Expr::var(1)), Expr::sum(vec![Expr::var(0), Expr::var(1)]));
        b
    }

    #[test]
    fn lattice_tie_break_is_lexicographic() {
        let r = enumerate_lattice(&bilinear_block(), &BlockDuals::zero(2)).unwrap();
        assert_eq!(r.zeta, -3.0);
        assert_eq!(r.design(2), Some(vec![0, 3]));
        assert_eq!(r.scanned, 16);
    }

    #[test]
    fn lattice_without_feasible_points() {
        let mut b = parabola();
        b.constraints.push(Expr::constant(1.0));
        let r = enumerate_lattice(&b, &BlockDuals::zero(1)).unwrap();
        assert_eq!(r.zeta, f64::INFINITY);
        assert!(r.point.is_none());
        assert_eq!(solve_pricing(&b, &BlockDuals::zero(1), PricingMode::Exact).status, PricingStatus::Infeasible);
    }

    #[test]
    fn single_lattice_point() {
        let b = single_block(3, 3).blocks.remove(0);
        let r = enumerate_lattice(&b, &BlockDuals::zero(1)).unwrap();
        assert_eq!(r.zeta, 1.0);
    }

    #[test]
    fn refuses_free_continuous() {
        let mut b = parabola();
        b.z.push(InnerVar { name: "t".into(), lo: 0.0, hi: 1.0, integer: false });
        assert!(matches!(enumerate_lattice(&b, &BlockDuals::zero(1)), Err(LatticeError::FreeContinuous(_))));
    }

    #[test]
    fn circle_in_square_pricing() {
        // y: assigned, z: centre; trim objective 4 y - pi y
        let mut b = parabola();
        b.convexity = Convexity::AtMostOne;
        b.y = vec![LinkingVar { name: "y".into(), lo: 1, hi: 1, weight: None }];
        b.z = vec![
            InnerVar { name: "cx".into(), lo: 0.0, hi: 2.0, integer: false },
            InnerVar { name: "cy".into(), lo: 0.0, hi: 2.0, integer: false },
        ];
        let area = std::f64::consts::PI;
        b.objective = Expr::linear(0.0, &[(0, 4.0 - area)]);
        let m = |c: usize| Expr::linear(0.0, &[(c, 1.0)]);
        for c in [1, 2] {
            // 1 - c - 2(1 - y) <= 0 and c + 1 - 2 - 2(1 - y) <= 0
            b.constraints.push(Expr::sub(Expr::linear(1.0 - 2.0, &[(0, 2.0)]), m(c)));
            b.constraints.push(Expr::sum(vec![m(c), Expr::linear(1.0 - 2.0 - 2.0, &[(0, 2.0)])]));
        }
        let r = solve_pricing(&b, &BlockDuals::zero(1), PricingMode::Exact);
        assert_eq!(r.status, PricingStatus::Optimal);
        assert!((r.u - (4.0 - area)).abs() < 1e-12);
        let p = r.point.unwrap();
        assert!((p[1] - 1.0).abs() < 1e-8 && (p[2] - 1.0).abs() < 1e-8);
    }
}
