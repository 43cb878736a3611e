use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::interval::{Interval, Tape};
use crate::model::{Expr, VarDomain};

/// Closed-form values for some variables as functions of the others, tried as
/// incumbent repairs at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub assigns: Vec<(usize, Expr)>,
}

#[derive(Clone, Debug)]
pub struct GlobalProblem {
    pub domains: Vec<VarDomain>,
    pub objective: Expr,
    /// `g <= 0`
    pub inequalities: Vec<Expr>,
    /// `h = 0`
    pub equalities: Vec<Expr>,
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Copy, Debug)]
pub struct GlobalOptions {
    /// Stop once `u - l <= gap * (1 + |u|)`.
    pub gap: f64,
    pub node_limit: usize,
    pub feas_tol: f64,
    /// Continuous intervals narrower than this fraction of their root width are not split.
    pub min_rel_width: f64,
    pub fbbt_rounds: usize,
    pub deadline: Option<Instant>,
}

impl GlobalOptions {
    pub fn exact() -> Self {
        GlobalOptions { gap: 1e-9, node_limit: 2_000_000, feas_tol: 1e-8, min_rel_width: 1e-11, fbbt_rounds: 4, deadline: None }
    }

    pub fn with_budget(nodes: usize) -> Self {
        GlobalOptions { node_limit: nodes.max(1), ..Self::exact() }
    }

    pub fn with_gap(gap: f64) -> Self {
        GlobalOptions { gap, ..Self::exact() }
    }
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self::exact()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlobalStatus {
    Optimal,
    BoundsOnly,
    Infeasible,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: usize,
    pub pruned_infeasible: usize,
    pub pruned_bound: usize,
    pub stalled: usize,
    pub max_open: usize,
}

#[derive(Clone, Debug)]
pub struct GlobalResult {
    pub status: GlobalStatus,
    pub point: Option<Vec<f64>>,
    /// Incumbent objective, `+inf` without one.
    pub upper: f64,
    /// Valid lower bound on the global minimum, `+inf` when proven infeasible.
    pub lower: f64,
    pub stats: SearchStats,
}

struct Node {
    lb: f64,
    depth: usize,
    id: usize,
    bx: Vec<Interval>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lb
            .total_cmp(&self.lb)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Compiled<'a> {
    problem: &'a GlobalProblem,
    objective: Tape,
    ineqs: Vec<Tape>,
    eqs: Vec<Tape>,
    ineq_vars: Vec<Vec<usize>>,
    eq_vars: Vec<Vec<usize>>,
    obj_vars: Vec<usize>,
    root_width: Vec<f64>,
    opts: GlobalOptions,
}

fn round_integers(bx: &mut [Interval], domains: &[VarDomain]) -> bool {
    for (iv, d) in bx.iter_mut().zip(domains) {
        if d.integer {
            let lo = (iv.lo - 1e-9).ceil();
            let hi = (iv.hi + 1e-9).floor();
            if lo > hi {
                return false;
            }
            *iv = Interval { lo, hi };
        }
    }
    true
}

impl<'a> Compiled<'a> {
    fn new(problem: &'a GlobalProblem, opts: GlobalOptions) -> Self {
        Compiled {
            problem,
            objective: Tape::new(&problem.objective),
            ineqs: problem.inequalities.iter().map(Tape::new).collect(),
            eqs: problem.equalities.iter().map(Tape::new).collect(),
            ineq_vars: problem.inequalities.iter().map(Expr::variables).collect(),
            eq_vars: problem.equalities.iter().map(Expr::variables).collect(),
            obj_vars: problem.objective.variables(),
            root_width: problem.domains.iter().map(|d| (d.hi - d.lo).max(0.0)).collect(),
            opts,
        }
    }

    /// Forward-backward tightening; `None` when the box holds no feasible point.
    fn tighten(&self, bx: &mut Vec<Interval>, cutoff: f64) -> Option<()> {
        let tol = self.opts.feas_tol;
        let le = Interval { lo: f64::NEG_INFINITY, hi: tol };
        let eq = Interval { lo: -tol, hi: tol };
        for _ in 0..self.opts.fbbt_rounds {
            let before = bx.clone();
            for t in &self.ineqs {
                t.propagate(bx, le).ok()?;
            }
            for t in &self.eqs {
                t.propagate(bx, eq).ok()?;
            }
            if cutoff.is_finite() {
                self.objective.propagate(bx, Interval { lo: f64::NEG_INFINITY, hi: cutoff }).ok()?;
            }
            if !round_integers(bx, &self.problem.domains) {
                return None;
            }
            let shrink = before
                .iter()
                .zip(bx.iter())
                .map(|(a, b)| if a.width() > 0.0 { 1.0 - b.width() / a.width() } else { 0.0 })
                .fold(0.0, f64::max);
            if shrink < 0.01 {
                break;
            }
        }
        Some(())
    }

    fn evaluate(&self, point: &[f64]) -> Option<f64> {
        let tol = self.opts.feas_tol;
        for g in &self.problem.inequalities {
            if g.eval(point).ok()? > tol {
                return None;
            }
        }
        for h in &self.problem.equalities {
            if h.eval(point).ok()?.abs() > tol {
                return None;
            }
        }
        self.problem.objective.eval(point).ok()
    }

    fn trial_points(&self, bx: &[Interval]) -> Vec<Vec<f64>> {
        let mid: Vec<f64> = bx
            .iter()
            .zip(&self.problem.domains)
            .map(|(iv, d)| {
                let m = iv.mid();
                if d.integer {
                    m.round().clamp(iv.lo, iv.hi)
                } else {
                    m
                }
            })
            .collect();
        let mut out = Vec::with_capacity(1 + self.problem.candidates.len());
        for cand in &self.problem.candidates {
            let mut p = mid.clone();
            let mut ok = true;
            for (var, e) in &cand.assigns {
                match e.eval(&mid) {
                    Ok(v) => p[*var] = v.clamp(bx[*var].lo, bx[*var].hi),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                out.push(p);
            }
        }
        out.push(mid);
        out
    }
}

/// Minimizes the problem over its box domain.
pub fn solve_global(problem: &GlobalProblem, opts: &GlobalOptions) -> GlobalResult {
    let c = Compiled::new(problem, *opts);
    let mut stats = SearchStats::default();
    let mut root: Vec<Interval> = problem.domains.iter().map(|d| Interval { lo: d.lo, hi: d.hi }).collect();
    let infeasible_result = |stats: SearchStats| GlobalResult {
        status: GlobalStatus::Infeasible,
        point: None,
        upper: f64::INFINITY,
        lower: f64::INFINITY,
        stats,
    };
    if root.iter().any(|iv| !(iv.lo <= iv.hi)) || !round_integers(&mut root, &problem.domains) {
        return infeasible_result(stats);
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    // lower bounds of boxes removed without being proven empty
    let mut dropped_lb = f64::INFINITY;
    let mut heap = BinaryHeap::new();
    heap.push(Node { lb: f64::NEG_INFINITY, depth: 0, id: 0, bx: root });
    let mut next_id = 1;
    let gap_of = |u: f64| opts.gap * (1.0 + u.abs());

    while let Some(mut node) = heap.pop() {
        let u = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if node.lb >= u - gap_of(u) {
            stats.pruned_bound += 1;
            dropped_lb = dropped_lb.min(node.lb);
            continue;
        }
        if stats.nodes >= opts.node_limit || opts.deadline.is_some_and(|d| Instant::now() >= d) {
            heap.push(node);
            break;
        }
        stats.nodes += 1;

        if c.tighten(&mut node.bx, u).is_none() {
            stats.pruned_infeasible += 1;
            continue;
        }
        let Ok(obj) = c.objective.range(&node.bx) else {
            stats.pruned_infeasible += 1;
            continue;
        };
        let lb = node.lb.max(obj.lo);

        let mut undecided: Vec<usize> = Vec::new();
        let mut infeasible = false;
        for (k, t) in c.ineqs.iter().enumerate() {
            match t.range(&node.bx) {
                Err(_) => infeasible = true,
                Ok(r) if r.lo > opts.feas_tol => infeasible = true,
                Ok(r) if r.hi > opts.feas_tol => undecided.extend(&c.ineq_vars[k]),
                Ok(_) => {}
            }
        }
        for (k, t) in c.eqs.iter().enumerate() {
            match t.range(&node.bx) {
                Err(_) => infeasible = true,
                Ok(r) if r.lo > opts.feas_tol || r.hi < -opts.feas_tol => infeasible = true,
                Ok(r) if r.hi > opts.feas_tol || r.lo < -opts.feas_tol => undecided.extend(&c.eq_vars[k]),
                Ok(_) => {}
            }
        }
        if infeasible {
            stats.pruned_infeasible += 1;
            continue;
        }

        for p in c.trial_points(&node.bx) {
            if let Some(v) = c.evaluate(&p) {
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, p));
                }
            }
        }
        let u = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if lb >= u - gap_of(u) {
            stats.pruned_bound += 1;
            dropped_lb = dropped_lb.min(lb);
            continue;
        }
        if obj.hi - lb > 0.5 * gap_of(lb) {
            undecided.extend(&c.obj_vars);
        }
        undecided.sort_unstable();
        undecided.dedup();

        let Some(j) = choose_var(&c, &node.bx, &undecided) else {
            // nothing left to split: either every point is feasible with a flat
            // objective, or the box reached the resolution limit
            if !undecided.is_empty() {
                stats.stalled += 1;
            }
            dropped_lb = dropped_lb.min(lb);
            continue;
        };
        let iv = node.bx[j];
        let (left, right) = if problem.domains[j].integer {
            let m = iv.mid().floor();
            (Interval { lo: iv.lo, hi: m }, Interval { lo: m + 1.0, hi: iv.hi })
        } else {
            let m = iv.mid();
            (Interval { lo: iv.lo, hi: m }, Interval { lo: m, hi: iv.hi })
        };
        let mut lbx = node.bx.clone();
        lbx[j] = left;
        let mut rbx = node.bx;
        rbx[j] = right;
        heap.push(Node { lb, depth: node.depth + 1, id: next_id, bx: lbx });
        heap.push(Node { lb, depth: node.depth + 1, id: next_id + 1, bx: rbx });
        next_id += 2;
        stats.max_open = stats.max_open.max(heap.len());
    }

    let open_lb = heap.iter().map(|n| n.lb).fold(f64::INFINITY, f64::min);
    let lower_nodes = open_lb.min(dropped_lb);
    match best {
        None => {
            if lower_nodes == f64::INFINITY {
                infeasible_result(stats)
            } else {
                GlobalResult { status: GlobalStatus::BoundsOnly, point: None, upper: f64::INFINITY, lower: lower_nodes, stats }
            }
        }
        Some((u, p)) => {
            let lower = lower_nodes.min(u);
            let status = if u - lower <= gap_of(u) { GlobalStatus::Optimal } else { GlobalStatus::BoundsOnly };
            GlobalResult { status, point: Some(p), upper: u, lower, stats }
        }
    }
}

fn choose_var(c: &Compiled<'_>, bx: &[Interval], candidates: &[usize]) -> Option<usize> {
    let domains = &c.problem.domains;
    let score = |j: usize| {
        let w = bx[j].width();
        if w.is_infinite() || c.root_width[j].is_infinite() {
            f64::INFINITY
        } else if c.root_width[j] > 0.0 {
            w / c.root_width[j]
        } else {
            0.0
        }
    };
    let pick = |filter: &dyn Fn(usize) -> bool| {
        candidates
            .iter()
            .copied()
            .filter(|&j| filter(j))
            .fold(None, |acc: Option<(usize, f64)>, j| {
                let s = score(j);
                match acc {
                    Some((_, best)) if best >= s => acc,
                    _ => Some((j, s)),
                }
            })
            .map(|(j, _)| j)
    };
    pick(&|j| domains[j].integer && bx[j].hi > bx[j].lo).or_else(|| {
        pick(&|j| {
            !domains[j].integer
                && bx[j].width() > c.opts.min_rel_width * c.root_width[j].max(1.0)
                && bx[j].mid() > bx[j].lo
                && bx[j].mid() < bx[j].hi
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn int(lo: f64, hi: f64) -> VarDomain {
        VarDomain { lo, hi, integer: true }
    }

    fn cont(lo: f64, hi: f64) -> VarDomain {
        VarDomain { lo, hi, integer: false }
    }

    fn problem(domains: Vec<VarDomain>, objective: Expr, ineqs: Vec<Expr>) -> GlobalProblem {
        GlobalProblem { domains, objective, inequalities: ineqs, equalities: vec![], candidates: vec![] }
    }

    #[test]
    fn integer_parabola() {
        let f = Expr::sqr(Expr::linear(-2.0, &[(0, 1.0)]));
        let r = solve_global(&problem(vec![int(0.0, 3.0)], f, vec![]), &GlobalOptions::exact());
        assert_eq!(r.status, GlobalStatus::Optimal);
        assert_eq!(r.point.unwrap(), vec![2.0]);
        assert_eq!(r.upper, 0.0);
    }

    #[test]
    fn continuous_nonconvex() {
        // min x^4 - 3x^2 + x on [-2, 2]; global minimum near x = -1.3008
        let x = Expr::var(0);
        let f = Expr::sum(vec![
            Expr::powi(x.clone(), 4),
            Expr::mul(Expr::constant(-3.0), Expr::sqr(x.clone())),
            x,
        ]);
        let r = solve_global(&problem(vec![cont(-2.0, 2.0)], f.clone(), vec![]), &GlobalOptions::with_gap(1e-7));
        assert_eq!(r.status, GlobalStatus::Optimal);
        let brute = (0..=400_000)
            .map(|k| -2.0 + 4.0 * k as f64 / 400_000.0)
            .map(|v| f.eval(&[v]).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(r.lower <= brute + 1e-12 && r.upper >= brute - 1e-6, "{} {} {}", r.lower, r.upper, brute);
        assert!(r.point.unwrap()[0] < -1.0);
    }

    #[test]
    fn infeasible_box() {
        let g = Expr::linear(5.0, &[(0, -1.0)]);
        let r = solve_global(&problem(vec![int(0.0, 3.0)], Expr::var(0), vec![g]), &GlobalOptions::exact());
        assert_eq!(r.status, GlobalStatus::Infeasible);
        assert_eq!(r.lower, f64::INFINITY);
    }

    #[test]
    fn budget_gives_valid_bounds() {
        let f = Expr::sub(Expr::mul(Expr::var(0), Expr::var(1)), Expr::sum(vec![Expr::var(0), Expr::var(1)]));
        let p = problem(vec![int(0.0, 3.0), int(0.0, 3.0)], f, vec![]);
        for budget in 1..10 {
            let r = solve_global(&p, &GlobalOptions::with_budget(budget));
            assert!(r.lower <= -3.0 + 1e-12, "budget {budget}: {}", r.lower);
            assert!(r.upper >= -3.0);
        }
        let r = solve_global(&p, &GlobalOptions::exact());
        assert_eq!(r.upper, -3.0);
    }

    #[test]
    fn candidate_repairs_continuous_variable() {
        // min t subject to 3/n - t <= 0, n in {1..4}, t in [0, 10]; candidate t = 3/n
        let g = Expr::sub(Expr::div(Expr::constant(3.0), Expr::var(0)), Expr::var(1));
        let mut p = problem(vec![int(1.0, 4.0), cont(0.0, 10.0)], Expr::var(1), vec![g]);
        p.candidates.push(Candidate { assigns: vec![(1, Expr::div(Expr::constant(3.0), Expr::var(0)))] });
        let r = solve_global(&p, &GlobalOptions::exact());
        assert_eq!(r.status, GlobalStatus::Optimal);
        assert!((r.upper - 0.75).abs() < 2e-8, "{}", r.upper);
    }
}
