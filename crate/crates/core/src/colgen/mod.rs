//! Column generation for the master LP relaxation.

mod column;
mod cuts;
mod master;

use std::io::Write;
use std::time::Instant;

use log::{debug, trace};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use column::{Column, ColumnPool, InfeasibleDesign, Insert, Provenance};
pub use cuts::{
    add_infeasibility_cut, binary_no_good, monotone_stage_cut, no_good_constraint, CutError, CutOutcome, CutStyle,
    LinearCut,
};
pub use master::{
    build_phase_one_lp, build_rmp_lp, master_rows, BoundSense, Branch, DualPrices, MasterRow, NodeBounds, Rmp, RowKind,
};

use crate::lp::{solve_lp, LpError, LpSolution, LpStatus};
use crate::model::{Block, Convexity, StructuredModel};
use crate::pricing::{
    solve_feasibility_pricing, solve_fixed_design, solve_pricing, BlockDuals, PricingMode, PricingResult,
    PricingStatus,
};

#[derive(Debug, Error)]
pub enum ColgenError {
    #[error("master LP failed: {0}")]
    Lp(#[from] LpError),
    #[error("restricted master is unbounded")]
    Unbounded,
    #[error("no initial columns: {0}")]
    NoInitialColumns(String),
    #[error("pricing result has nonnegative reduced cost {0}")]
    NotImproving(f64),
    #[error(transparent)]
    Cut(#[from] CutError),
}

#[derive(Clone, Copy, Debug)]
pub struct ColgenConfig {
    /// Absolute tolerance on `UB - LB` of the relaxation.
    pub eps: f64,
    /// Node budget for early pricing rounds; `None` prices exactly throughout.
    pub pricing_budget: Option<usize>,
    /// Columns are added when their reduced cost is below `-column_tol`.
    pub column_tol: f64,
    /// Unchanged master values, while columns are still added, before pricing turns exact.
    pub stall_limit: usize,
    pub max_iterations: usize,
    pub deadline: Option<Instant>,
}

impl Default for ColgenConfig {
    fn default() -> Self {
        ColgenConfig {
            eps: 1e-6,
            pricing_budget: Some(500),
            column_tol: 1e-9,
            stall_limit: 10,
            max_iterations: 100_000,
            deadline: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    SingletonDesigns,
    ZeroDualPricing,
}

/// One column-generation iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub node: usize,
    pub iter: usize,
    pub phase: u8,
    pub v_rmp: f64,
    /// Sum over blocks of the pricing lower bounds `l_i`.
    pub sum_l: f64,
    /// `v_rmp` plus the per-block bound terms of this iteration.
    pub lb_candidate: f64,
    pub lb: f64,
    pub ub: f64,
    pub columns_added: usize,
    pub pricing_mode: &'static str,
    pub wallclock_ms: u128,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxedStatus {
    Converged,
    /// The running lower bound reached the cutoff.
    Pruned,
    Infeasible,
    TimeLimit,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct RelaxedMpResult {
    pub status: RelaxedStatus,
    pub v_rmp: f64,
    pub lb: f64,
    pub ub: f64,
    /// Columns of the node's restricted master at exit.
    pub active: Vec<usize>,
    pub x: Vec<f64>,
    /// `(pool index, value)` of every active column.
    pub lambda: Vec<(usize, f64)>,
    pub duals: Option<DualPrices>,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub columns_added: usize,
}

/// Early termination threshold for a node.
#[derive(Clone, Copy, Debug)]
pub struct Cutoff {
    pub ub: f64,
    pub rel_gap: f64,
}

impl Cutoff {
    pub const NONE: Cutoff = Cutoff { ub: f64::INFINITY, rel_gap: 0.0 };

    /// True when a node with lower bound `lb` cannot beat `ub` by more than the gap.
    pub fn prunes(&self, lb: f64) -> bool {
        if !self.ub.is_finite() {
            return false;
        }
        if self.rel_gap.is_infinite() {
            return true;
        }
        lb >= self.ub - self.rel_gap * self.ub.abs()
    }
}

/// Column-generation state shared by all nodes of a run.
pub struct Workspace<'a> {
    pub model: &'a StructuredModel,
    /// Model blocks plus infeasibility cuts.
    pub blocks: Vec<Block>,
    pub pool: ColumnPool,
    pub cut_style: CutStyle,
    pub started: Instant,
    pub pricing_calls: usize,
    threads: rayon::ThreadPool,
}

impl<'a> Workspace<'a> {
    pub fn new(model: &'a StructuredModel, workers: usize) -> Self {
        let threads = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("failed to start pricing threads");
        Workspace {
            model,
            blocks: model.blocks.clone(),
            pool: ColumnPool::new(),
            cut_style: if model.monotone { CutStyle::MonotoneStage } else { CutStyle::NoGood },
            started: Instant::now(),
            pricing_calls: 0,
            threads,
        }
    }

    fn elapsed_ms(&self) -> u128 {
        self.started.elapsed().as_millis()
    }

    fn run_parallel<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        self.threads.install(|| (0..n).into_par_iter().map(f).collect())
    }

    /// Costs of `design` in every block with `y` fixed. Returns the blocks where
    /// it is infeasible, or the per-block exact costs.
    pub fn price_shared_column(&mut self, design: &[i64]) -> SharedPricing {
        let blocks = &self.blocks;
        let results = self.run_parallel(blocks.len(), |i| {
            if blocks[i].contains_design(design) {
                Some(solve_fixed_design(&blocks[i], design))
            } else {
                None
            }
        });
        self.pricing_calls += results.len();
        let mut costs = Vec::with_capacity(results.len());
        let mut infeasible = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Some(r) if r.point.is_some() => costs.push(r.u),
                _ => {
                    infeasible.push(i);
                    costs.push(f64::INFINITY);
                }
            }
        }
        SharedPricing { costs, infeasible }
    }

    /// Registers an infeasible shared design: records it and cuts it from every block.
    pub fn register_infeasible(&mut self, design: &[i64], blocks: &[usize]) -> Result<(), ColgenError> {
        for &i in blocks {
            self.pool.mark_infeasible(design, i);
        }
        for b in self.blocks.iter_mut() {
            add_infeasibility_cut(b, design, self.cut_style, self.model.monotone)?;
        }
        debug!("design {:?} infeasible in blocks {:?}; cut added", design, blocks);
        Ok(())
    }

    /// Adds a design found by pricing in block `origin`. In shared mode the design
    /// is costed in every block first. Returns pool indices of new columns.
    fn add_design(&mut self, origin: usize, design: Vec<i64>, cost: f64, exact: bool) -> Result<Vec<usize>, ColgenError> {
        if !self.model.nonanticipative {
            let ins = self.pool.insert(Column { block: origin, design, cost, provenance: Provenance::Priced, exact });
            return Ok(match ins {
                Insert::New(k) | Insert::Improved(k) => vec![k],
                Insert::Duplicate(_) => vec![],
            });
        }
        if self.pool.is_infeasible(&design) || self.pool.find(origin, &design).is_some() {
            return Ok(vec![]);
        }
        let shared = self.price_shared_column(&design);
        if !shared.infeasible.is_empty() {
            self.register_infeasible(&design, &shared.infeasible)?;
            return Ok(vec![]);
        }
        let mut added = Vec::new();
        for (i, c) in shared.costs.into_iter().enumerate() {
            let provenance = if i == origin { Provenance::Priced } else { Provenance::SharedRepriced };
            let ins = self.pool.insert(Column { block: i, design: design.clone(), cost: c, provenance, exact: true });
            if !matches!(ins, Insert::Duplicate(_)) {
                added.push(ins.index());
            }
        }
        Ok(added)
    }

    fn price_blocks(&mut self, bounds: &NodeBounds, duals: &[BlockDuals], mode: PricingMode, phase_one: bool) -> Vec<PricingResult> {
        let restricted: Vec<Block> =
            (0..self.blocks.len()).map(|i| bounds.restrict_block(self.model, i, &self.blocks[i])).collect();
        self.pricing_calls += restricted.len();
        self.run_parallel(restricted.len(), |i| {
            if phase_one {
                solve_feasibility_pricing(&restricted[i], &duals[i], mode)
            } else {
                solve_pricing(&restricted[i], &duals[i], mode)
            }
        })
    }
}

/// Per-block costs of a shared design.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedPricing {
    /// `+inf` where the design is infeasible.
    pub costs: Vec<f64>,
    pub infeasible: Vec<usize>,
}

/// Column with cost `u + w'y + mu` from an improving pricing result.
pub fn column_from_pricing(result: &PricingResult, duals: &BlockDuals, block: usize) -> Result<Column, ColgenError> {
    if !(result.u < 0.0) {
        return Err(ColgenError::NotImproving(result.u));
    }
    let design = result.design(duals.w.len()).expect("finite u implies an incumbent");
    let cost = result.u + duals.weighted(&design) + duals.mu;
    Ok(Column {
        block,
        design,
        cost,
        provenance: Provenance::Priced,
        exact: result.status == PricingStatus::Optimal,
    })
}

/// Lower-bound contribution of one block: `l_i` under an equality convexity
/// row, `min(l_i, -mu_i)` when the row is `<= 1`.
fn bound_term(l: f64, mu: f64, equality: bool) -> f64 {
    if equality {
        l
    } else {
        l.min(-mu)
    }
}

/// Fills the pool with initial columns. Singleton designs come from the
/// instance's seed columns; zero-dual pricing solves each block with `pi = 0, mu = 0`.
pub fn init_columns(ws: &mut Workspace<'_>, strategy: InitStrategy) -> Result<usize, ColgenError> {
    let model = ws.model;
    let before = ws.pool.len();
    match strategy {
        InitStrategy::SingletonDesigns => {
            for seed in &model.seed_columns {
                let block = &ws.blocks[seed.block];
                let cost = match seed.cost {
                    Some(c) => c,
                    None => {
                        let r = solve_fixed_design(block, &seed.design);
                        ws.pricing_calls += 1;
                        if r.point.is_none() {
                            continue;
                        }
                        r.u
                    }
                };
                ws.pool.insert(Column {
                    block: seed.block,
                    design: seed.design.clone(),
                    cost,
                    provenance: Provenance::Initial,
                    exact: true,
                });
            }
        }
        InitStrategy::ZeroDualPricing => {
            let n = ws.blocks.len();
            for _round in 0..=ws.model.blocks.iter().map(|b| b.lattice_size().min(10_000) as usize).sum::<usize>() {
                let duals: Vec<BlockDuals> = ws.blocks.iter().map(|b| BlockDuals::zero(b.p())).collect();
                let pending: Vec<usize> =
                    (0..n).filter(|&i| !ws.pool.columns().iter().any(|c| c.block == i)).collect();
                if pending.is_empty() {
                    break;
                }
                let results = ws.price_blocks(&NodeBounds::root(), &duals, PricingMode::Exact, false);
                let mut progress = false;
                for i in pending {
                    let r = &results[i];
                    let Some(design) = r.design(ws.blocks[i].p()) else { continue };
                    let added = ws.add_design(i, design, r.u, r.status == PricingStatus::Optimal)?;
                    for k in added {
                        ws.pool_mark_initial(k);
                    }
                    progress = true;
                }
                if !progress {
                    break;
                }
            }
        }
    }
    let added = ws.pool.len() - before;
    let missing: Vec<&str> = model
        .blocks
        .iter()
        .enumerate()
        .filter(|(i, b)| b.convexity == Convexity::Equality && !ws.pool.columns().iter().any(|c| c.block == *i))
        .map(|(_, b)| b.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(ColgenError::NoInitialColumns(format!(
            "no feasible design found for block(s) {}; supply seed columns",
            missing.join(", ")
        )));
    }
    Ok(added)
}

impl Workspace<'_> {
    fn pool_mark_initial(&mut self, k: usize) {
        let c = self.pool.get(k).clone();
        if c.provenance == Provenance::Priced {
            self.pool.insert(Column { provenance: Provenance::Initial, ..c });
        }
    }
}

/// Column generation for the LP relaxation at one node (Algorithm-1 loop).
///
/// `active` holds the node's starting columns; new columns are added to the
/// shared pool and to the node's set.
pub fn solve_relaxed_mp(
    ws: &mut Workspace<'_>,
    node: usize,
    bounds: &NodeBounds,
    active: Vec<usize>,
    cutoff: Cutoff,
    cfg: &ColgenConfig,
) -> Result<RelaxedMpResult, ColgenError> {
    let mut run = Run { node, active, trace: Vec::new(), iterations: 0, columns_added: 0 };
    let model = ws.model;
    let nb = model.blocks.len();
    let timed_out = || cfg.deadline.is_some_and(|d| Instant::now() >= d);

    // blocks that must select a column need at least one
    for i in 0..nb {
        if bounds.forces_selection(model, i) && !run.active.iter().any(|&k| ws.pool.get(k).block == i) {
            let restricted = bounds.restrict_block(model, i, &ws.blocks[i]);
            let r = solve_pricing(&restricted, &BlockDuals::zero(restricted.p()), PricingMode::Exact);
            ws.pricing_calls += 1;
            match r.design(restricted.p()) {
                Some(d) => {
                    ws.add_design(i, d.clone(), r.u, true)?;
                    if let Some(k) = ws.pool.find(i, &d) {
                        run.activate(ws, bounds, k);
                    }
                }
                None => return Ok(run.finish(RelaxedStatus::Infeasible, f64::INFINITY, f64::INFINITY)),
            }
        }
    }

    // phase one: restore feasibility of the restricted master
    let mut lb1 = f64::NEG_INFINITY;
    let scale = 1.0 + model.rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    loop {
        if timed_out() {
            return Ok(run.finish(RelaxedStatus::TimeLimit, f64::NEG_INFINITY, f64::INFINITY));
        }
        let rmp = build_rmp_lp(model, bounds, &ws.pool, &run.active);
        match solve_lp(&rmp.lp)?.status {
            LpStatus::Optimal => break,
            LpStatus::Unbounded => return Err(ColgenError::Unbounded),
            LpStatus::Infeasible => {}
        }
        if run.iterations >= cfg.max_iterations {
            return Ok(run.finish(RelaxedStatus::IterationLimit, f64::NEG_INFINITY, f64::INFINITY));
        }
        run.iterations += 1;
        let p1 = build_phase_one_lp(model, bounds, &ws.pool, &run.active);
        let s1 = solve_lp(&p1.lp)?;
        if s1.status != LpStatus::Optimal {
            return Err(ColgenError::Unbounded);
        }
        let duals = p1.duals(&s1);
        let bduals: Vec<BlockDuals> = (0..nb).map(|i| p1.block_duals(&duals, i)).collect();
        let priced = ws.price_blocks(bounds, &bduals, PricingMode::Exact, true);
        let cuts_before = ws.pool.infeasible().len();
        let mut cand = s1.objective;
        let mut added = 0;
        for (i, r) in priced.iter().enumerate() {
            cand += bound_term(r.l, bduals[i].mu, bounds.forces_selection(model, i));
            if r.u < -cfg.column_tol {
                let d = r.design(ws.blocks[i].p()).expect("finite u implies an incumbent");
                let fixed = solve_fixed_design(&ws.blocks[i], &d);
                ws.pricing_calls += 1;
                if fixed.point.is_none() {
                    continue;
                }
                for k in ws.add_design(i, d, fixed.u, true)? {
                    added += run.activate(ws, bounds, k) as usize;
                }
            }
        }
        let cuts_added = ws.pool.infeasible().len() > cuts_before;
        lb1 = lb1.max(cand);
        run.columns_added += added;
        run.trace.push(TraceRow {
            node,
            iter: run.iterations,
            phase: 1,
            v_rmp: s1.objective,
            sum_l: priced.iter().map(|r| r.l).sum(),
            lb_candidate: cand,
            lb: lb1,
            ub: s1.objective,
            columns_added: added,
            pricing_mode: "exact",
            wallclock_ms: ws.elapsed_ms(),
        });
        if lb1 > 1e-7 * scale || (added == 0 && !cuts_added) {
            debug!("node {node}: master infeasible (phase-one bound {lb1:.3e}, value {:.3e})", s1.objective);
            return Ok(run.finish(RelaxedStatus::Infeasible, f64::INFINITY, f64::INFINITY));
        }
    }

    // phase two
    let mut mode = match cfg.pricing_budget {
        Some(n) => PricingMode::Budget(n),
        None => PricingMode::Exact,
    };
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut stall = 0usize;
    let mut last_v = f64::INFINITY;
    loop {
        let rmp = build_rmp_lp(model, bounds, &ws.pool, &run.active);
        let sol = solve_lp(&rmp.lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Unbounded => return Err(ColgenError::Unbounded),
            // columns are never removed, so only numerical trouble lands here
            LpStatus::Infeasible => return Ok(run.finish(RelaxedStatus::Infeasible, f64::INFINITY, f64::INFINITY)),
        }
        let v = sol.objective;
        ub = ub.min(v);
        if timed_out() {
            return Ok(run.finish_with(&rmp, &sol, RelaxedStatus::TimeLimit, lb.min(ub), ub));
        }
        if run.iterations >= cfg.max_iterations {
            return Ok(run.finish_with(&rmp, &sol, RelaxedStatus::IterationLimit, lb.min(ub), ub));
        }
        run.iterations += 1;

        let duals = rmp.duals(&sol);
        let bduals: Vec<BlockDuals> = (0..nb).map(|i| rmp.block_duals(&duals, i)).collect();
        let priced = ws.price_blocks(bounds, &bduals, mode, false);
        let mut cand = v;
        for (i, r) in priced.iter().enumerate() {
            cand += bound_term(r.l, bduals[i].mu, bounds.forces_selection(model, i));
        }
        lb = lb.max(cand).min(ub);

        let cuts_before = ws.pool.infeasible().len();
        let mut added = 0;
        for (i, r) in priced.iter().enumerate() {
            if r.u < -cfg.column_tol {
                let col = column_from_pricing(r, &bduals[i], i)?;
                for k in ws.add_design(i, col.design, col.cost, col.exact)? {
                    added += run.activate(ws, bounds, k) as usize;
                }
            }
        }
        let cuts_added = ws.pool.infeasible().len() > cuts_before;
        run.columns_added += added;
        let mode_name = match mode {
            PricingMode::Exact => "exact",
            PricingMode::Budget(_) => "budget",
        };
        run.trace.push(TraceRow {
            node,
            iter: run.iterations,
            phase: 2,
            v_rmp: v,
            sum_l: priced.iter().map(|r| r.l).sum(),
            lb_candidate: cand,
            lb,
            ub,
            columns_added: added,
            pricing_mode: mode_name,
            wallclock_ms: ws.elapsed_ms(),
        });
        trace!("node {node} iter {}: v_rmp {v:.9} lb {lb:.9} added {added} ({mode_name})", run.iterations);

        if cutoff.prunes(lb) {
            return Ok(run.finish_with(&rmp, &sol, RelaxedStatus::Pruned, lb, ub));
        }
        if ub - lb <= cfg.eps {
            return Ok(run.finish_with(&rmp, &sol, RelaxedStatus::Converged, lb, ub));
        }
        if added == 0 && !cuts_added {
            if mode == PricingMode::Exact {
                // nothing improving under exact pricing: the residual gap is pricing tolerance
                return Ok(run.finish_with(&rmp, &sol, RelaxedStatus::Converged, lb, ub));
            }
            mode = PricingMode::Exact;
            continue;
        }
        if (v - last_v).abs() <= 1e-12 * (1.0 + v.abs()) {
            stall += 1;
            if stall >= cfg.stall_limit {
                mode = PricingMode::Exact;
            }
        } else {
            stall = 0;
        }
        last_v = v;
    }
}

struct Run {
    node: usize,
    active: Vec<usize>,
    trace: Vec<TraceRow>,
    iterations: usize,
    columns_added: usize,
}

impl Run {
    /// Adds a pool column to the node's master if the node admits it.
    fn activate(&mut self, ws: &Workspace<'_>, bounds: &NodeBounds, k: usize) -> bool {
        let c = ws.pool.get(k);
        if self.active.contains(&k) || !bounds.admits(ws.model, c.block, &c.design) {
            return false;
        }
        self.active.push(k);
        true
    }

    fn finish(self, status: RelaxedStatus, lb: f64, ub: f64) -> RelaxedMpResult {
        let _ = self.node;
        RelaxedMpResult {
            status,
            v_rmp: ub,
            lb,
            ub,
            active: self.active,
            x: Vec::new(),
            lambda: Vec::new(),
            duals: None,
            trace: self.trace,
            iterations: self.iterations,
            columns_added: self.columns_added,
        }
    }

    fn finish_with(self, rmp: &Rmp, sol: &LpSolution, status: RelaxedStatus, lb: f64, ub: f64) -> RelaxedMpResult {
        let mut r = self.finish(status, lb, ub);
        r.v_rmp = sol.objective;
        r.x = rmp.x(sol).to_vec();
        r.lambda = rmp.lambda(sol);
        r.duals = Some(rmp.duals(sol));
        r
    }
}

/// Writes trace rows as CSV.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
