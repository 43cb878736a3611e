use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use minlp_bnp::model::{load_instance, model_to_string, InstanceError};
use minlp_bnp::problems::{
    encode_circle_cutting, encode_shared_design, gen_branching_adversary, gen_random_integer, CircleCuttingInstance,
    RandomIntSpec, SharedDesignInstance,
};

mod run;

use run::{compare, solve, Method, RunConfig};

#[derive(Parser)]
#[command(name = "minlp-bnp", version, about = "Branch-and-price for block-structured nonconvex MINLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance as JSON.
    Generate(GenerateArgs),
    /// Solve an instance and write a JSON report.
    Solve(SolveArgs),
    /// Solve with every applicable method and print a side-by-side table.
    Compare(SolveArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Circle,
    Shared,
    LowHigh,
    Adversary,
    RandomInt,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    family: Family,
    #[arg(long, env = "MINLP_BNP_SEED", default_value_t = 0)]
    seed: u64,
    /// Maximum circles, or stages for `shared`.
    #[arg(long, default_value_t = 3)]
    size: usize,
    /// Maximum rectangles, or scenarios for `shared`.
    #[arg(long, default_value_t = 3)]
    count: usize,
    /// Output file; stdout when absent.
    #[arg(long, env = "MINLP_BNP_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, env = "MINLP_BNP_METHOD", default_value = "bnp")]
    method: Method,
    /// Relative optimality gap.
    #[arg(long, env = "MINLP_BNP_GAP", default_value_t = 1e-3)]
    gap: f64,
    /// Seconds.
    #[arg(long, env = "MINLP_BNP_TIME_LIMIT", default_value_t = 600.0)]
    time_limit: f64,
    /// Search nodes per early pricing call, or `exact`.
    #[arg(long, env = "MINLP_BNP_PRICING_BUDGET", default_value = "500")]
    pricing_budget: String,
    #[arg(long, env = "MINLP_BNP_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, env = "MINLP_BNP_SEED", default_value_t = 0)]
    seed: u64,
    /// Report file; stdout when absent.
    #[arg(long, env = "MINLP_BNP_OUT")]
    out: Option<PathBuf>,
    /// Column generation trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Search tree log as CSV.
    #[arg(long)]
    tree: Option<PathBuf>,
}

impl SolveArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        anyhow::ensure!(self.gap > 0.0, "--gap must be positive");
        anyhow::ensure!(self.workers >= 1, "--workers must be at least 1");
        anyhow::ensure!(self.time_limit >= 0.0 && self.time_limit.is_finite(), "--time-limit must be non-negative");
        let pricing_budget = match self.pricing_budget.as_str() {
            "exact" => None,
            n => Some(n.parse().with_context(|| format!("bad --pricing-budget `{n}`"))?),
        };
        Ok(RunConfig {
            method: self.method,
            gap: self.gap,
            time_limit: self.time_limit,
            pricing_budget,
            workers: self.workers,
            seed: self.seed,
        })
    }
}

fn generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let model = match args.family {
        Family::Circle => encode_circle_cutting(&CircleCuttingInstance::random(args.seed, args.size, args.count))?,
        Family::Shared => encode_shared_design(&SharedDesignInstance::random(args.seed, args.size, args.count))?,
        Family::LowHigh => encode_shared_design(&SharedDesignInstance::low_high())?,
        Family::Adversary => gen_branching_adversary(args.seed),
        Family::RandomInt => gen_random_integer(args.seed, RandomIntSpec::default()),
    };
    let text = model_to_string(&model);
    match &args.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

const EXIT_ERROR: u8 = 1;
const EXIT_MALFORMED: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (args, comparing) = match &cli.command {
        Command::Generate(g) => {
            return match generate(g) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(EXIT_ERROR)
                }
            };
        }
        Command::Solve(a) => (a, false),
        Command::Compare(a) => (a, true),
    };
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let model = match load_instance(&args.instance) {
        Ok(m) => m.into_inner(),
        Err(e @ InstanceError::Io(_)) => {
            eprintln!("error: {}: {e}", args.instance.display());
            return ExitCode::from(EXIT_ERROR);
        }
        Err(e) => {
            eprintln!("malformed instance {}: {e}", args.instance.display());
            return ExitCode::from(EXIT_MALFORMED);
        }
    };
    let outcome = if comparing {
        compare(&model, &cfg, args.out.as_deref())
    } else {
        solve(&model, &cfg, args.out.as_deref(), args.trace.as_deref(), args.tree.as_deref())
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
