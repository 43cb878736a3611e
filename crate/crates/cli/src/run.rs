use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::ValueEnum;
use minlp_bnp::bnp::{relative_gap, solve_bnp, write_tree_csv, BnpConfig, BnpStatus};
use minlp_bnp::colgen::write_trace_csv;
use minlp_bnp::global::{GlobalOptions, GlobalStatus};
use minlp_bnp::model::StructuredModel;
use minlp_bnp::oracle::{enumerate_master, solve_fullspace, OracleError};
use serde::{Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bnp,
    FullspaceOracle,
    EnumerateColumns,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub method: Method,
    pub gap: f64,
    pub time_limit: f64,
    pub pricing_budget: Option<usize>,
    pub workers: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Limit,
    Infeasible,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Optimal => 0,
            Status::Limit => 2,
            Status::Infeasible => 3,
        }
    }
}

// JSON has no infinities
fn num<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&v.to_string())
    }
}

fn opt_num<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => num(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub instance: String,
    pub method: Method,
    pub status: Status,
    #[serde(serialize_with = "opt_num")]
    pub objective: Option<f64>,
    #[serde(serialize_with = "num")]
    pub lb: f64,
    #[serde(serialize_with = "num")]
    pub ub: f64,
    #[serde(serialize_with = "num")]
    pub gap: f64,
    pub nodes: usize,
    pub colgen_iterations: usize,
    pub columns_generated: usize,
    pub wallclock_s: f64,
    pub workers: usize,
    pub seed: u64,
    /// Chosen design per block; `null` for an unused block.
    pub designs: Vec<Option<Vec<i64>>>,
    /// Branching or the master heuristic was needed at the root.
    pub branched: bool,
}

impl Report {
    fn new(model: &StructuredModel, cfg: &RunConfig, method: Method) -> Self {
        Report {
            instance: model.name.clone(),
            method,
            status: Status::Limit,
            objective: None,
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            gap: f64::INFINITY,
            nodes: 0,
            colgen_iterations: 0,
            columns_generated: 0,
            wallclock_s: 0.0,
            workers: cfg.workers,
            seed: cfg.seed,
            designs: Vec::new(),
            branched: false,
        }
    }
}

#[derive(Default)]
struct Logs<'a> {
    trace: Option<&'a Path>,
    tree: Option<&'a Path>,
}

fn run_bnp(model: &StructuredModel, cfg: &RunConfig, logs: &Logs) -> anyhow::Result<Report> {
    let bcfg = BnpConfig {
        gap: cfg.gap,
        time_limit: Some(Duration::from_secs_f64(cfg.time_limit)),
        pricing_budget: cfg.pricing_budget,
        workers: cfg.workers,
        ..BnpConfig::default()
    };
    let r = solve_bnp(model, &bcfg)?;
    if let Some(p) = logs.trace {
        write_trace_csv(&r.trace, File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
    }
    if let Some(p) = logs.tree {
        write_tree_csv(&r.tree, File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
    }
    let mut rep = Report::new(model, cfg, Method::Bnp);
    rep.status = match r.status {
        BnpStatus::Optimal => Status::Optimal,
        BnpStatus::LimitReached => Status::Limit,
        BnpStatus::Infeasible => Status::Infeasible,
    };
    rep.objective = r.objective();
    rep.lb = r.lb;
    rep.ub = r.ub;
    rep.gap = r.gap();
    rep.nodes = r.nodes;
    rep.colgen_iterations = r.colgen_iterations;
    rep.columns_generated = r.columns_generated;
    rep.wallclock_s = r.wallclock.as_secs_f64();
    rep.designs = r.incumbent.as_ref().map(|i| i.designs()).unwrap_or_default();
    rep.branched = r.root_fractional || r.nodes > 1;
    Ok(rep)
}

fn run_fullspace(model: &StructuredModel, cfg: &RunConfig) -> Report {
    let start = Instant::now();
    let opts = GlobalOptions {
        gap: cfg.gap,
        deadline: Some(start + Duration::from_secs_f64(cfg.time_limit)),
        ..GlobalOptions::exact()
    };
    let r = solve_fullspace(model, &opts);
    let mut rep = Report::new(model, cfg, Method::FullspaceOracle);
    rep.status = match r.status {
        GlobalStatus::Optimal => Status::Optimal,
        GlobalStatus::BoundsOnly => Status::Limit,
        GlobalStatus::Infeasible => Status::Infeasible,
    };
    rep.objective = r.point.as_ref().map(|_| r.upper);
    rep.lb = r.lower;
    rep.ub = r.upper;
    rep.gap = relative_gap(r.lower, r.upper);
    rep.nodes = r.stats.nodes;
    rep.wallclock_s = start.elapsed().as_secs_f64();
    if let Some(p) = &r.point {
        let mut off = 0;
        for b in &model.blocks {
            rep.designs.push(Some(p[off..off + b.p()].iter().map(|v| v.round() as i64).collect()));
            off += b.p() + b.z.len();
        }
    }
    rep
}

fn run_enumeration(model: &StructuredModel, cfg: &RunConfig) -> Result<Report, OracleError> {
    let start = Instant::now();
    let master = enumerate_master(model)?;
    let opt = master.milp_value(model)?;
    let mut rep = Report::new(model, cfg, Method::EnumerateColumns);
    rep.columns_generated = master.columns.len();
    rep.wallclock_s = start.elapsed().as_secs_f64();
    if opt.objective == f64::INFINITY {
        rep.status = Status::Infeasible;
        rep.lb = f64::INFINITY;
        return Ok(rep);
    }
    rep.status = if opt.proven { Status::Optimal } else { Status::Limit };
    rep.objective = Some(opt.objective);
    rep.ub = opt.objective;
    if opt.proven {
        rep.lb = opt.objective;
        rep.gap = 0.0;
    }
    let mut designs = vec![None; model.blocks.len()];
    for (b, d) in opt.designs {
        designs[b] = Some(d);
    }
    rep.designs = designs;
    Ok(rep)
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => match writeln!(std::io::stdout(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
            _ => {}
        },
    }
    Ok(())
}

/// Runs the configured method, writes its report and returns the exit code.
pub fn solve(
    model: &StructuredModel,
    cfg: &RunConfig,
    out: Option<&Path>,
    trace: Option<&Path>,
    tree: Option<&Path>,
) -> anyhow::Result<u8> {
    let rep = match cfg.method {
        Method::Bnp => run_bnp(model, cfg, &Logs { trace, tree })?,
        Method::FullspaceOracle => run_fullspace(model, cfg),
        Method::EnumerateColumns => run_enumeration(model, cfg)?,
    };
    write_json(&rep, out)?;
    Ok(rep.status.exit_code())
}

#[derive(Serialize)]
struct Comparison {
    results: Vec<Report>,
    refused: Vec<(Method, String)>,
    consistent: bool,
    branching_exercised: bool,
}

fn agree(a: f64, b: f64, eps: f64) -> bool {
    (a - b).abs() <= eps * a.abs().max(b.abs()).max(1e-9)
}

/// Runs every method, prints an aligned table and a verdict. The exit code
/// is that of the branch-and-price run.
pub fn compare(model: &StructuredModel, cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<u8> {
    let mut results = vec![run_bnp(model, cfg, &Logs::default())?, run_fullspace(model, cfg)];
    let mut refused = Vec::new();
    match run_enumeration(model, cfg) {
        Ok(r) => results.push(r),
        Err(e) => refused.push((Method::EnumerateColumns, e.to_string())),
    }

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:<18} {:<10} {:>16} {:>10} {:>10}", "method", "status", "objective", "gap", "time_s")?;
    for r in &results {
        let method = r.method.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        let status = format!("{:?}", r.status).to_lowercase();
        let obj = r.objective.map_or("-".to_string(), |v| format!("{v:.6}"));
        writeln!(stdout, "{method:<18} {status:<10} {obj:>16} {:>10.2e} {:>10.3}", r.gap, r.wallclock_s)?;
    }
    for (m, why) in &refused {
        let method = m.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        writeln!(stdout, "{method:<18} refused: {why}")?;
    }

    let objectives: Vec<Option<f64>> = results.iter().map(|r| r.objective).collect();
    let consistent = objectives.windows(2).all(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => agree(a, b, cfg.gap),
        (None, None) => true,
        _ => false,
    });
    let branching_exercised = results[0].branched;
    writeln!(
        stdout,
        "verdict: {} (objectives within {})",
        if consistent { "consistent" } else { "MISMATCH" },
        cfg.gap
    )?;
    writeln!(stdout, "branching exercised: {branching_exercised}")?;
    drop(stdout);

    let code = results[0].status.exit_code();
    if let Some(p) = out {
        write_json(&Comparison { results, refused, consistent, branching_exercised }, Some(p))?;
    }
    Ok(code)
}
