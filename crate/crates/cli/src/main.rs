use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use stratmc::experiment::{run_experiment, run_trace, AlgoChoice, Command, DistChoice, ExperimentConfig, StrataSpec};
use stratmc::report::ExperimentReport;
use stratmc::rng::DEFAULT_SEED;

/// Sets the worker thread count; results do not depend on it.
const THREADS_VAR: &str = "STRATMC_THREADS";

#[derive(Parser, Debug)]
#[command(name = "stratmc", version, about = "Adaptive stratified Monte-Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Integrate one environment on one partition.
    Integrate(IntegrateArgs),
    /// One row per number of strata.
    SweepStrata(SweepArgs),
    /// Pseudo-regret against the budget on a fixed partition.
    Scaling(ScalingArgs),
    /// Worst-case regret on two-level Bernoulli environments.
    LowerBound(LowerBoundArgs),
    /// Coverage of the mean and standard-deviation deviation bounds.
    Concentration(ConcentrationArgs),
    /// Asian option pricing with stratification of the terminal value.
    Asian(AsianArgs),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnvArgs {
    #[arg(long, default_value = "heteroscedastic-ramp")]
    env: String,
    #[arg(long, default_value_t = 1)]
    dim: usize,
}

#[derive(Args, Debug)]
struct AlgoArgs {
    #[arg(long, value_parser = parse_algo)]
    algo: Option<AlgoChoice>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    fmax: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    a_override: Option<f64>,
}

#[derive(Args, Debug)]
struct StrataArgs {
    #[arg(long, conflicts_with_all = ["k", "auto_k"])]
    strata_per_axis: Option<usize>,
    /// Total number of strata; must be a perfect power of the dimension.
    #[arg(long, conflicts_with = "auto_k")]
    k: Option<usize>,
    /// Choose the number of strata from the budget.
    #[arg(long, requires = "alpha")]
    auto_k: bool,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
struct IntegrateArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    algo: AlgoArgs,
    #[command(flatten)]
    strata: StrataArgs,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Also write the index trace of the first MC-UCB run.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    algo: AlgoArgs,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value = "1,2,4,8,16,32", value_parser = parse_grid)]
    k_grid: Grid,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    algo: AlgoArgs,
    #[command(flatten)]
    strata: StrataArgs,
    #[arg(long, default_value = "256,512,1024,2048,4096,8192", value_parser = parse_grid)]
    n_grid: Grid,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct LowerBoundArgs {
    #[command(flatten)]
    algo: AlgoArgs,
    #[arg(long, default_value = "2,4,8,16", value_parser = parse_grid)]
    k_grid: Grid,
    #[arg(long, default_value = "512,2048,8192", value_parser = parse_grid)]
    n_grid: Grid,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Random sign vectors tried when there are more than 10 informative arms.
    #[arg(long, default_value_t = 20)]
    env_samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ConcentrationArgs {
    /// gaussian, bounded-uniform or all.
    #[arg(long, default_value = "gaussian", value_parser = parse_dist)]
    dist: DistChoice,
    #[arg(long, default_value = "10,100,1000", value_parser = parse_grid)]
    n_grid: Grid,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, visible_alias = "reps", default_value_t = 10_000)]
    trials: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct AsianArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value = "1..50", value_parser = parse_grid)]
    k_grid: Grid,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 120.0)]
    strike: f64,
    /// mcucb or uniform; both when omitted.
    #[arg(long, value_parser = parse_algo)]
    algo: Option<AlgoChoice>,
    /// MC-UCB width; defaults to 150 log n.
    #[arg(long)]
    a_override: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Grid(Vec<usize>);

/// Comma-separated values or inclusive ranges, e.g. `1..5,8,16`.
fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: usize = lo.trim().parse().map_err(|_| format!("bad range start in `{part}`"))?;
            let hi: usize = hi
                .trim()
                .trim_start_matches('=')
                .parse()
                .map_err(|_| format!("bad range end in `{part}`"))?;
            if lo > hi {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(
                part.parse()
                    .map_err(|_| format!("`{part}` is not a nonnegative integer"))?,
            );
        }
    }
    Ok(Grid(out))
}

fn parse_algo(s: &str) -> std::result::Result<AlgoChoice, String> {
    s.parse().map_err(|e: stratmc::Error| e.to_string())
}

fn parse_dist(s: &str) -> std::result::Result<DistChoice, String> {
    s.parse().map_err(|e: stratmc::Error| e.to_string())
}

fn apply_algo(cfg: &mut ExperimentConfig, a: AlgoArgs) {
    cfg.algo = a.algo;
    cfg.b = a.b;
    cfg.f_max = a.fmax;
    cfg.delta = a.delta;
    cfg.a_override = a.a_override;
}

fn strata_spec(s: &StrataArgs) -> Option<StrataSpec> {
    if s.auto_k {
        return s.alpha.map(|alpha| StrataSpec::Auto { alpha });
    }
    s.k.map(StrataSpec::Count)
        .or(s.strata_per_axis.map(StrataSpec::PerAxis))
}

struct Plan {
    config: ExperimentConfig,
    out: Option<PathBuf>,
    trace: bool,
}

fn plan(cmd: Cmd) -> Plan {
    let (config, out, trace) = match cmd {
        Cmd::Integrate(a) => {
            let mut c = ExperimentConfig::new(Command::Integrate);
            c.env = a.env.env;
            c.dim = a.env.dim;
            c.n = a.n;
            c.reps = a.reps;
            c.seed = a.common.seed;
            if let Some(s) = strata_spec(&a.strata) {
                c.strata = s;
            }
            apply_algo(&mut c, a.algo);
            (c, a.common.out, a.trace)
        }
        Cmd::SweepStrata(a) => {
            let mut c = ExperimentConfig::new(Command::SweepStrata);
            c.env = a.env.env;
            c.dim = a.env.dim;
            c.n = a.n;
            c.k_grid = a.k_grid.0;
            c.reps = a.reps;
            c.seed = a.common.seed;
            apply_algo(&mut c, a.algo);
            (c, a.common.out, false)
        }
        Cmd::Scaling(a) => {
            let mut c = ExperimentConfig::new(Command::Scaling);
            c.env = a.env.env;
            c.dim = a.env.dim;
            c.n_grid = a.n_grid.0;
            c.reps = a.reps;
            c.seed = a.common.seed;
            if let Some(s) = strata_spec(&a.strata) {
                c.strata = s;
            }
            apply_algo(&mut c, a.algo);
            (c, a.common.out, false)
        }
        Cmd::LowerBound(a) => {
            let mut c = ExperimentConfig::new(Command::LowerBound);
            c.k_grid = a.k_grid.0;
            c.n_grid = a.n_grid.0;
            c.reps = a.reps;
            c.env_samples = a.env_samples;
            c.seed = a.common.seed;
            apply_algo(&mut c, a.algo);
            (c, a.common.out, false)
        }
        Cmd::Concentration(a) => {
            let mut c = ExperimentConfig::new(Command::Concentration);
            c.dist = a.dist;
            c.n_grid = a.n_grid.0;
            c.delta = Some(a.delta);
            c.reps = a.trials;
            c.seed = a.common.seed;
            (c, a.common.out, false)
        }
        Cmd::Asian(a) => {
            let mut c = ExperimentConfig::new(Command::Asian);
            c.n = a.n;
            c.k_grid = a.k_grid.0;
            c.reps = a.reps;
            c.strike = a.strike;
            c.algo = a.algo;
            c.a_override = a.a_override;
            c.seed = a.common.seed;
            (c, a.common.out, false)
        }
    };
    Plan { config, out, trace }
}

fn trace_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.trace.csv"))
}

fn emit(report: &ExperimentReport, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => report.save(path).with_context(|| format!("writing {}", path.display())),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            report.write_csv(&mut lock)?;
            lock.flush().context("flushing standard output")
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var(THREADS_VAR) {
        let threads: usize = value
            .parse()
            .with_context(|| format!("{THREADS_VAR}={value} is not a thread count"))?;
        if threads == 0 {
            bail!("{THREADS_VAR} must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn execute(plan: Plan) -> Result<()> {
    configure_threads()?;
    let report = run_experiment(&plan.config)?;
    emit(&report, plan.out.as_deref())?;
    if plan.trace {
        let trace = run_trace(&plan.config)?;
        match &plan.out {
            Some(out) => emit(&trace, Some(&trace_path(out)))?,
            None => trace.write_csv(std::io::stderr().lock())?,
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(plan(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
