//! Branch-and-price over the discretized master problem.

mod branching;
mod recover;

use std::io::Write;
use std::time::{Duration, Instant};

use log::{debug, info};
use serde::Serialize;

pub use branching::{
    aggregate_originals, choose_branch, choose_lambda_branch, choose_x_branch, early_prune, filter_columns, Aggregate,
    BranchDecision, BranchRule, PruneDecision, INT_TOL,
};
pub use recover::{recover_original_solution, BlockSolution, Incumbent, RecoveryError, COST_TOL};

use crate::colgen::{
    build_rmp_lp, init_columns, solve_relaxed_mp, ColgenConfig, ColgenError, Cutoff, InfeasibleDesign,
    InitStrategy, NodeBounds, RelaxedStatus, TraceRow, Workspace,
};
use crate::lp::{solve_milp, LpStatus, MilpOptions};
use crate::model::{Block, StructuredModel};

#[derive(Clone, Debug)]
pub struct BnpConfig {
    /// Relative gap `UB - LB <= gap * |UB|`; `f64::INFINITY` stops at the first incumbent.
    pub gap: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Search-node budget for early pricing rounds; `None` prices exactly.
    pub pricing_budget: Option<usize>,
    pub workers: usize,
    /// Defaults to [`BranchRule::default_for`].
    pub branch_rule: Option<BranchRule>,
    /// Defaults to singleton designs when the instance declares seed columns.
    pub init: Option<InitStrategy>,
    /// Node limit of the restricted-master MILP heuristic; 0 disables it.
    pub heuristic_nodes: usize,
}

impl Default for BnpConfig {
    fn default() -> Self {
        BnpConfig {
            gap: 1e-3,
            node_limit: 10_000,
            time_limit: Some(Duration::from_secs(600)),
            pricing_budget: Some(500),
            workers: 1,
            branch_rule: None,
            init: None,
            heuristic_nodes: 2_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BnpStatus {
    /// Gap closed.
    Optimal,
    /// Node or time limit hit; bounds are valid but the gap may be open.
    LimitReached,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Open,
    Pruned,
    Infeasible,
    Branched,
    Integral,
}

/// A node of the search tree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BnpNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub bounds: NodeBounds,
    pub lb: f64,
    pub status: NodeStatus,
}

/// One processed node, as written to the tree log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeRow {
    pub node: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub lb: f64,
    pub ub_after: f64,
    pub columns_in_pool: usize,
    pub status: NodeStatus,
    pub wallclock_ms: u128,
}

#[derive(Clone, Debug)]
pub struct BnpResult {
    pub status: BnpStatus,
    pub incumbent: Option<Incumbent>,
    pub lb: f64,
    pub ub: f64,
    pub nodes: usize,
    pub colgen_iterations: usize,
    pub columns_generated: usize,
    pub pool_size: usize,
    pub pricing_calls: usize,
    pub root_lb: f64,
    /// The root master solution needed branching or the MILP heuristic.
    pub root_fractional: bool,
    pub lambda_branches: usize,
    pub infeasible_designs: Vec<InfeasibleDesign>,
    /// Model blocks with the infeasibility cuts added during the run.
    pub blocks: Vec<Block>,
    pub tree: Vec<TreeRow>,
    pub trace: Vec<TraceRow>,
    pub wallclock: Duration,
}

impl BnpResult {
    /// `(UB - LB) / |UB|`, infinite without an incumbent.
    pub fn gap(&self) -> f64 {
        relative_gap(self.lb, self.ub)
    }

    pub fn objective(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|_| self.ub)
    }
}

pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if !ub.is_finite() || !lb.is_finite() {
        return f64::INFINITY;
    }
    let d = (ub - lb).max(0.0);
    if d == 0.0 {
        0.0
    } else {
        d / ub.abs()
    }
}

fn gap_closed(lb: f64, ub: f64, gap: f64) -> bool {
    ub.is_finite() && (gap.is_infinite() || ub - lb <= gap * ub.abs())
}

struct Tree {
    open: Vec<BnpNode>,
    next_id: usize,
    /// Smallest bound among nodes discarded by bound.
    pruned_lb: f64,
}

impl Tree {
    /// Best bound first, then deeper, then older.
    fn pop(&mut self) -> Option<BnpNode> {
        let best = (0..self.open.len()).min_by(|&a, &b| {
            let (x, y) = (&self.open[a], &self.open[b]);
            x.lb.total_cmp(&y.lb).then(y.depth.cmp(&x.depth)).then(x.id.cmp(&y.id))
        })?;
        Some(self.open.swap_remove(best))
    }

    fn lower_bound(&self, ub: f64) -> f64 {
        self.open.iter().map(|n| n.lb).fold(self.pruned_lb.min(ub), f64::min)
    }

    fn push_children(&mut self, parent: &BnpNode, d: BranchDecision) {
        for b in [d.down, d.up] {
            self.open.push(BnpNode {
                id: self.next_id,
                parent: Some(parent.id),
                depth: parent.depth + 1,
                bounds: parent.bounds.child(b),
                lb: parent.lb,
                status: NodeStatus::Open,
            });
            self.next_id += 1;
        }
    }
}

struct State {
    ub: f64,
    incumbent: Option<Incumbent>,
}

impl State {
    fn offer(&mut self, ws: &mut Workspace<'_>, x: &[f64], lambda: &[(usize, f64)]) -> Result<bool, RecoveryError> {
        let inc = recover_original_solution(ws.model, &mut ws.pool, x, lambda)?;
        if inc.objective < self.ub {
            info!("incumbent {:.9} (master value {:.9})", inc.objective, inc.master_objective);
            self.ub = inc.objective;
            self.incumbent = Some(inc);
            return Ok(true);
        }
        Ok(false)
    }
}

fn lambda_integral(lambda: &[(usize, f64)]) -> bool {
    lambda.iter().all(|(_, l)| (l - l.round()).abs() <= INT_TOL)
}

fn x_integral(model: &StructuredModel, x: &[f64]) -> bool {
    model.x.iter().zip(x).all(|(d, v)| !d.integer || (v - v.round()).abs() <= INT_TOL)
}

/// Restricted master with binary `lambda` over the node's columns.
fn rmp_milp(
    ws: &Workspace<'_>,
    bounds: &NodeBounds,
    active: &[usize],
    nodes: usize,
) -> Result<Option<(Vec<f64>, Vec<(usize, f64)>)>, ColgenError> {
    let rmp = build_rmp_lp(ws.model, bounds, &ws.pool, active);
    let mut integer: Vec<bool> = ws.model.x.iter().map(|v| v.integer).collect();
    integer.resize(rmp.lp.num_vars(), true);
    let sol = solve_milp(&rmp.lp, &integer, &MilpOptions { node_limit: nodes, ..MilpOptions::default() })?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    let x = sol.x[..rmp.num_x].to_vec();
    let lambda = rmp.columns.iter().enumerate().map(|(k, &c)| (c, sol.x[rmp.lambda_var(k)])).collect();
    Ok(Some((x, lambda)))
}

/// Seeds the column pool; `Err` when an equality block admits no design.
fn initial_pool(ws: &mut Workspace<'_>, cfg: &BnpConfig) -> Result<(), ColgenError> {
    let strategy = cfg.init.unwrap_or(if ws.model.seed_columns.is_empty() {
        InitStrategy::ZeroDualPricing
    } else {
        InitStrategy::SingletonDesigns
    });
    match init_columns(ws, strategy) {
        Err(ColgenError::NoInitialColumns(msg)) if strategy == InitStrategy::SingletonDesigns => {
            debug!("seed columns incomplete ({msg}); pricing with zero duals");
            init_columns(ws, InitStrategy::ZeroDualPricing).map(|_| ())
        }
        r => r.map(|_| ()),
    }
}

/// Branch-and-price: column generation at every node, branching on aggregated
/// original variables, best-bound node selection.
pub fn solve_bnp(model: &StructuredModel, cfg: &BnpConfig) -> Result<BnpResult, ColgenError> {
    let started = Instant::now();
    let deadline = cfg.time_limit.map(|t| started + t);
    let rule = cfg.branch_rule.unwrap_or_else(|| BranchRule::default_for(model));
    let mut ws = Workspace::new(model, cfg.workers);
    let ccfg = ColgenConfig { pricing_budget: cfg.pricing_budget, deadline, ..ColgenConfig::default() };

    let mut result = BnpResult {
        status: BnpStatus::LimitReached,
        incumbent: None,
        lb: f64::NEG_INFINITY,
        ub: f64::INFINITY,
        nodes: 0,
        colgen_iterations: 0,
        columns_generated: 0,
        pool_size: 0,
        pricing_calls: 0,
        root_lb: f64::NEG_INFINITY,
        root_fractional: false,
        lambda_branches: 0,
        infeasible_designs: Vec::new(),
        blocks: Vec::new(),
        tree: Vec::new(),
        trace: Vec::new(),
        wallclock: Duration::ZERO,
    };
    let timed_out = || deadline.is_some_and(|d| Instant::now() >= d);
    if timed_out() {
        result.wallclock = started.elapsed();
        return Ok(result);
    }

    match initial_pool(&mut ws, cfg) {
        Ok(()) => {}
        Err(ColgenError::NoInitialColumns(msg)) => {
            info!("{msg}");
            result.status = BnpStatus::Infeasible;
            result.lb = f64::INFINITY;
            result.wallclock = started.elapsed();
            return Ok(result);
        }
        Err(e) => return Err(e),
    }
    let initial_columns = ws.pool.len();

    let mut tree = Tree {
        open: vec![BnpNode {
            id: 0,
            parent: None,
            depth: 0,
            bounds: NodeBounds::root(),
            lb: f64::NEG_INFINITY,
            status: NodeStatus::Open,
        }],
        next_id: 1,
        pruned_lb: f64::INFINITY,
    };
    let mut st = State { ub: f64::INFINITY, incumbent: None };
    let mut global_lb = f64::NEG_INFINITY;
    let mut stopped = false;

    while let Some(mut node) = tree.pop() {
        if early_prune(node.lb, st.ub, cfg.gap) == PruneDecision::Prune {
            tree.pruned_lb = tree.pruned_lb.min(node.lb);
            continue;
        }
        if result.nodes >= cfg.node_limit || timed_out() {
            tree.open.push(node);
            stopped = true;
            break;
        }
        result.nodes += 1;

        let active = filter_columns(model, &node.bounds, &ws.pool);
        let r = solve_relaxed_mp(&mut ws, node.id, &node.bounds, active, Cutoff { ub: st.ub, rel_gap: cfg.gap }, &ccfg)?;
        result.colgen_iterations += r.iterations;
        result.trace.extend(r.trace.iter().cloned());
        node.lb = node.lb.max(r.lb);
        if node.id == 0 {
            result.root_lb = r.lb;
        }

        node.status = match r.status {
            RelaxedStatus::Infeasible => NodeStatus::Infeasible,
            RelaxedStatus::Pruned => {
                tree.pruned_lb = tree.pruned_lb.min(node.lb);
                NodeStatus::Pruned
            }
            RelaxedStatus::TimeLimit => {
                tree.open.push(node.clone());
                stopped = true;
                NodeStatus::Open
            }
            RelaxedStatus::Converged | RelaxedStatus::IterationLimit => {
                process_solved(&mut ws, &mut st, &mut tree, &mut result, &node, &r.x, &r.lambda, rule, cfg)?
            }
        };
        debug!("node {} depth {} lb {:.9} ub {:.9}: {:?}", node.id, node.depth, node.lb, st.ub, node.status);
        result.tree.push(TreeRow {
            node: node.id,
            parent: node.parent,
            depth: node.depth,
            lb: node.lb,
            ub_after: st.ub,
            columns_in_pool: ws.pool.len(),
            status: node.status,
            wallclock_ms: started.elapsed().as_millis(),
        });
        global_lb = global_lb.max(tree.lower_bound(st.ub));
        if stopped {
            break;
        }
        if gap_closed(global_lb, st.ub, cfg.gap) {
            break;
        }
    }

    let lb = global_lb.max(tree.lower_bound(st.ub)).min(st.ub);
    result.lb = lb;
    result.ub = st.ub;
    result.status = if st.incumbent.is_none() && tree.open.is_empty() && !stopped {
        result.lb = f64::INFINITY;
        BnpStatus::Infeasible
    } else if gap_closed(lb, st.ub, cfg.gap) {
        BnpStatus::Optimal
    } else {
        BnpStatus::LimitReached
    };
    result.incumbent = st.incumbent;
    result.columns_generated = ws.pool.len() - initial_columns;
    result.pool_size = ws.pool.len();
    result.pricing_calls = ws.pricing_calls;
    result.infeasible_designs = ws.pool.infeasible().to_vec();
    result.blocks = ws.blocks.clone();
    result.wallclock = started.elapsed();
    info!(
        "{:?}: ub {:.9} lb {:.9} nodes {} columns {}",
        result.status, result.ub, result.lb, result.nodes, result.pool_size
    );
    Ok(result)
}

/// Incumbent update, pruning and branching for a node whose relaxation was solved.
#[allow(clippy::too_many_arguments)]
fn process_solved(
    ws: &mut Workspace<'_>,
    st: &mut State,
    tree: &mut Tree,
    result: &mut BnpResult,
    node: &BnpNode,
    x: &[f64],
    lambda: &[(usize, f64)],
    rule: BranchRule,
    cfg: &BnpConfig,
) -> Result<NodeStatus, ColgenError> {
    let model = ws.model;
    if lambda_integral(lambda) && x_integral(model, x) {
        let rounded: Vec<(usize, f64)> = lambda.iter().map(|&(k, l)| (k, l.round())).collect();
        match st.offer(ws, x, &rounded) {
            Ok(_) => return Ok(NodeStatus::Integral),
            Err(e) => debug!("node {}: integral master not recoverable: {e}", node.id),
        }
    }
    if node.id == 0 {
        result.root_fractional = true;
    }
    if cfg.heuristic_nodes > 0 {
        let active: Vec<usize> = lambda.iter().map(|&(k, _)| k).collect();
        if let Some((hx, hl)) = rmp_milp(ws, &node.bounds, &active, cfg.heuristic_nodes)? {
            if let Err(e) = st.offer(ws, &hx, &hl) {
                debug!("node {}: heuristic solution not recoverable: {e}", node.id);
            }
        }
    }
    if early_prune(node.lb, st.ub, cfg.gap) == PruneDecision::Prune {
        tree.pruned_lb = tree.pruned_lb.min(node.lb);
        return Ok(NodeStatus::Pruned);
    }
    let agg = aggregate_originals(model, lambda, &ws.pool);
    let decision = choose_branch(&agg, model, rule)
        .or_else(|| choose_x_branch(model, x))
        .or_else(|| {
            let d = choose_lambda_branch(lambda, &ws.pool);
            if d.is_some() {
                result.lambda_branches += 1;
                info!("node {}: integral designs with fractional lambda; branching on a column", node.id);
            }
            d
        });
    match decision {
        Some(d) => {
            tree.push_children(node, d);
            Ok(NodeStatus::Branched)
        }
        None => {
            // integral lambda whose recovery failed: nothing left to split on
            tree.pruned_lb = tree.pruned_lb.min(node.lb);
            Ok(NodeStatus::Pruned)
        }
    }
}

/// Writes the tree log as CSV.
pub fn write_tree_csv<W: Write>(rows: &[TreeRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::single_block;
    use crate::model::{Convexity, Expr, LinkingMatrix, Triplet};

    #[test]
    fn integral_root_needs_one_node() {
        let m = single_block(0, 4);
        let r = solve_bnp(&m, &BnpConfig::default()).unwrap();
        assert_eq!(r.status, BnpStatus::Optimal);
        assert_eq!(r.nodes, 1);
        assert!(r.ub.abs() < 1e-9);
        assert!(!r.root_fractional);
        assert_eq!(r.incumbent.unwrap().blocks[0].design, Some(vec![2]));
    }

    /// `(y - 1)^2 (y - 3)^2 + y / 2` with `y >= 2.5`: costs 9, 0.5, 2, 1.5, 11 on
    /// `y = 0..4`, so the LP mixes designs 1 and 3 at value 1.25.
    fn double_well() -> StructuredModel {
        let mut m = single_block(0, 4);
        let b = &mut m.blocks[0];
        b.objective = Expr::sum(vec![
            Expr::mul(Expr::sqr(Expr::linear(-1.0, &[(0, 1.0)])), Expr::sqr(Expr::linear(-3.0, &[(0, 1.0)]))),
            Expr::linear(0.0, &[(0, 0.5)]),
        ]);
        b.linking = LinkingMatrix::new(1, vec![Triplet::new(0, 0, 1.0)]);
        m.rows = 1;
        m.rhs = vec![2.5];
        m
    }

    #[test]
    fn fractional_root_branches() {
        let m = double_well();
        let cfg = BnpConfig { gap: 1e-9, heuristic_nodes: 0, ..BnpConfig::default() };
        let r = solve_bnp(&m, &cfg).unwrap();
        assert!(r.root_fractional);
        assert!(r.nodes >= 3, "nodes {}", r.nodes);
        assert_eq!(r.status, BnpStatus::Optimal);
        assert!((r.ub - 1.5).abs() < 1e-9);
        assert!((r.root_lb - 1.25).abs() < 1e-6);
        assert!(r.tree.iter().any(|t| t.status == NodeStatus::Branched));
        let inc = r.incumbent.unwrap();
        assert_eq!(inc.blocks[0].design, Some(vec![3]));
        assert!(inc.max_violation(&m) <= 1e-7);
    }

    #[test]
    fn infinite_gap_takes_first_incumbent() {
        let m = double_well();
        let cfg = BnpConfig { gap: f64::INFINITY, ..BnpConfig::default() };
        let r = solve_bnp(&m, &cfg).unwrap();
        assert_eq!(r.status, BnpStatus::Optimal);
        assert_eq!(r.nodes, 1);
        assert!(r.incumbent.is_some());
    }

    #[test]
    fn zero_time_limit_reports_bounds_only() {
        let m = double_well();
        let cfg = BnpConfig { time_limit: Some(Duration::ZERO), ..BnpConfig::default() };
        let r = solve_bnp(&m, &cfg).unwrap();
        assert_eq!(r.status, BnpStatus::LimitReached);
        assert_eq!(r.lb, f64::NEG_INFINITY);
        assert!(r.incumbent.is_none());
    }

    #[test]
    fn infeasible_model() {
        let mut m = double_well();
        m.rhs = vec![5.0];
        let r = solve_bnp(&m, &BnpConfig::default()).unwrap();
        assert_eq!(r.status, BnpStatus::Infeasible);
        m.rhs = vec![2.5];
        m.blocks[0].constraints.push(Expr::linear(1.0, &[]));
        let r = solve_bnp(&m, &BnpConfig::default()).unwrap();
        assert_eq!(r.status, BnpStatus::Infeasible);
    }

    #[test]
    fn unused_at_most_one_block() {
        let mut m = single_block(0, 4);
        m.blocks[0].convexity = Convexity::AtMostOne;
        m.blocks[0].objective = Expr::linear(1.0, &[(0, 1.0)]);
        let r = solve_bnp(&m, &BnpConfig::default()).unwrap();
        assert_eq!(r.status, BnpStatus::Optimal);
        assert!(r.ub.abs() < 1e-9);
    }

    #[test]
    fn tree_log_has_header() {
        let r = solve_bnp(&double_well(), &BnpConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_tree_csv(&r.tree, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("node,parent,depth,lb,ub_after,columns_in_pool,status,wallclock_ms"));
        assert_eq!(text.lines().count(), r.tree.len() + 1);
    }
}
