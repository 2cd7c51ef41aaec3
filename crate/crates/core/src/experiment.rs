//! Experiment orchestration: configuration, seeded repetitions and report
//! assembly for every command the command-line tool exposes.
//!
//! Repetition `r` of a row always draws from `stream(seed, r)`. Runs are
//! executed in parallel and collected by index before any reduction, so a
//! report depends only on the configuration and the seed.

use std::fmt;
use std::str::FromStr;

use log::info;
use rayon::prelude::*;

use crate::adversary::{scaling_fit, sigma_for_budget, worst_case_regret, ScalingReport};
use crate::allocate::{crude_mc_run, Allocator, McUcbParams, RunResult};
use crate::concentration::{bernstein_bound, coverage_test, coverage_tolerance, stddev_bound, CoverageDistribution};
use crate::error::{Error, Result};
use crate::finance::{
    reference_price, AsianEnvironment, AsianOptionSpec, REFERENCE_PATHS, REFERENCE_PRICE, REFERENCE_SEED,
};
use crate::metrics::{
    integral_of_mean, mcucb_regret_bound, minimax_regret_shape, pseudo_regret, quality, weighted_sigma, QuadratureSpec,
};
use crate::model::{builtin_env, Environment, NoiseSpec};
use crate::partition::Partition;
use crate::report::{Cell, ExperimentReport};
use crate::rng::{stream, DEFAULT_SEED};
use crate::sampler::{StratifiedEnv, StratumSampler};
use crate::select::choose_num_strata;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Integrate,
    SweepStrata,
    Scaling,
    LowerBound,
    Concentration,
    Asian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoChoice {
    McUcb,
    Uniform,
    Oracle,
    Crude,
}

impl AlgoChoice {
    pub fn name(self) -> &'static str {
        match self {
            AlgoChoice::McUcb => "mcucb",
            AlgoChoice::Uniform => "uniform",
            AlgoChoice::Oracle => "oracle",
            AlgoChoice::Crude => "crude",
        }
    }
}

impl fmt::Display for AlgoChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgoChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcucb" => Ok(AlgoChoice::McUcb),
            "uniform" => Ok(AlgoChoice::Uniform),
            "oracle" => Ok(AlgoChoice::Oracle),
            "crude" => Ok(AlgoChoice::Crude),
            _ => Err(Error::InvalidParameter(format!("unknown algorithm `{s}`"))),
        }
    }
}

/// How the hyper-cubic partition is sized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrataSpec {
    PerAxis(usize),
    /// Total count; must be a perfect `d`-th power.
    Count(usize),
    /// Chosen from the budget for `α`-Hölder functions.
    Auto {
        alpha: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistChoice {
    Gaussian,
    BoundedUniform,
    All,
}

impl FromStr for DistChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DistChoice::Gaussian),
            "bounded-uniform" | "uniform" => Ok(DistChoice::BoundedUniform),
            "all" => Ok(DistChoice::All),
            _ => Err(Error::InvalidParameter(format!("unknown distribution `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub env: String,
    pub dim: usize,
    /// `None` selects the command's default (`mcucb`; both `mcucb` and
    /// `uniform` for the option experiment).
    pub algo: Option<AlgoChoice>,
    pub n: usize,
    pub n_grid: Vec<usize>,
    pub strata: StrataSpec,
    pub k_grid: Vec<usize>,
    pub reps: usize,
    pub env_samples: usize,
    pub seed: u64,
    /// Noise scale; defaults to the environment's declared value.
    pub b: Option<f64>,
    pub f_max: Option<f64>,
    pub delta: Option<f64>,
    pub a_override: Option<f64>,
    pub dist: DistChoice,
    pub strike: f64,
}

impl ExperimentConfig {
    /// Defaults for `command`; every field can be overridden afterwards.
    pub fn new(command: Command) -> Self {
        let (n, n_grid, k_grid, reps) = match command {
            Command::Integrate | Command::SweepStrata => (1000, vec![], vec![1, 2, 4, 8, 16, 32], 1000),
            Command::Scaling => (0, (8..=13).map(|e| 1 << e).collect(), vec![], 1000),
            Command::LowerBound => (0, vec![512, 2048, 8192], vec![2, 4, 8, 16], 100),
            Command::Concentration => (0, vec![10, 100, 1000], vec![], 10_000),
            Command::Asian => (200, vec![], (1..=50).collect(), 10_000),
        };
        ExperimentConfig {
            command,
            env: "heteroscedastic-ramp".into(),
            dim: 1,
            algo: None,
            n,
            n_grid,
            strata: StrataSpec::PerAxis(4),
            k_grid,
            reps,
            env_samples: 20,
            seed: DEFAULT_SEED,
            b: None,
            f_max: None,
            delta: None,
            a_override: None,
            dist: DistChoice::Gaussian,
            strike: AsianOptionSpec::default().strike,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        let needs_n = matches!(self.command, Command::Integrate | Command::SweepStrata | Command::Asian);
        if needs_n && self.n == 0 {
            return Err(Error::InvalidParameter("budget n must be positive".into()));
        }
        let needs_n_grid = matches!(
            self.command,
            Command::Scaling | Command::LowerBound | Command::Concentration
        );
        if needs_n_grid && self.n_grid.is_empty() {
            return Err(Error::InvalidParameter("empty n grid".into()));
        }
        let needs_k_grid = matches!(
            self.command,
            Command::SweepStrata | Command::LowerBound | Command::Asian
        );
        if needs_k_grid && self.k_grid.is_empty() {
            return Err(Error::InvalidParameter("empty K grid".into()));
        }
        if let StrataSpec::PerAxis(0) | StrataSpec::Count(0) = self.strata {
            return Err(Error::InvalidParameter("need at least one stratum".into()));
        }
        Ok(())
    }

    fn algo_or(&self, default: AlgoChoice) -> AlgoChoice {
        self.algo.unwrap_or(default)
    }
}

/// Runs the configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    info!("running {:?} with seed {}", config.command, config.seed);
    match config.command {
        Command::Integrate => {
            let env = builtin_env(&config.env, config.dim)?;
            let mut runner = StratifiedRunner::new(config, &env)?;
            runner.row(config.n, config.strata)?;
            Ok(runner.report)
        }
        Command::SweepStrata => {
            let env = builtin_env(&config.env, config.dim)?;
            let mut runner = StratifiedRunner::new(config, &env)?;
            for &k in &config.k_grid {
                runner.row(config.n, StrataSpec::Count(k))?;
            }
            Ok(runner.report)
        }
        Command::Scaling => {
            let env = builtin_env(&config.env, config.dim)?;
            let mut runner = StratifiedRunner::new(config, &env)?;
            for &n in &config.n_grid {
                runner.row(n, config.strata)?;
            }
            let mut report = runner.report;
            if let Some(regrets) = report.numeric_column("regret_mean") {
                let xs: Vec<f64> = config.n_grid.iter().map(|&n| n as f64).collect();
                let ys: Vec<f64> = regrets.iter().map(|r| r.unwrap_or(0.0)).collect();
                if let Ok(fit) = crate::adversary::log_log_fit(&xs, &ys) {
                    report.add_metadata("regret_n_slope", format!("{:.16e}", fit.slope))?;
                }
            }
            Ok(report)
        }
        Command::LowerBound => lower_bound(config),
        Command::Concentration => concentration(config),
        Command::Asian => asian(config),
    }
}

const STRATIFIED_COLUMNS: &[&str] = &[
    "env",
    "dim",
    "k",
    "algo",
    "n",
    "reps",
    "seed",
    "b",
    "f_max",
    "delta",
    "width",
    "mean_estimate",
    "estimate_variance",
    "true_mean",
    "mse",
    "mse_stderr",
    "regret_mean",
    "regret_stderr",
    "oracle_risk",
    "quality",
    "regret_bound",
];

fn mean_and_stderr(xs: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    (mean, var, (var / m).sqrt())
}

fn run_reps<F>(reps: usize, seed: u64, f: F) -> Result<Vec<RunResult>>
where
    F: Fn(&mut crate::rng::Stream) -> Result<RunResult> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| f(&mut stream(seed, r as u64)))
        .collect()
}

fn build_partition(dim: usize, n: usize, strata: StrataSpec) -> Result<(Partition, Option<String>)> {
    match strata {
        StrataSpec::PerAxis(side) => Ok((Partition::hypercubic(dim, side)?, None)),
        StrataSpec::Count(k) => Ok((Partition::with_strata_count(dim, k)?, None)),
        StrataSpec::Auto { alpha } => {
            let choice = choose_num_strata(n, dim, alpha)?;
            let note = format!("n={n} alpha={alpha} side={} k={}", choice.side_count, choice.k_n);
            Ok((Partition::hypercubic(dim, choice.side_count)?, Some(note)))
        }
    }
}

/// Rows for environments on the unit cube.
struct StratifiedRunner<'a> {
    config: &'a ExperimentConfig,
    env: &'a Environment,
    quad: Option<QuadratureSpec>,
    true_mean: Option<f64>,
    report: ExperimentReport,
}

impl<'a> StratifiedRunner<'a> {
    fn new(config: &'a ExperimentConfig, env: &'a Environment) -> Result<Self> {
        let mut report = ExperimentReport::new(config.seed, STRATIFIED_COLUMNS);
        let quad = QuadratureSpec::for_dim(env.dim()).ok();
        let true_mean = match quad {
            Some(q) => Some(integral_of_mean(env, q)?),
            None => {
                report.add_metadata("truth", "unavailable")?;
                None
            }
        };
        Ok(StratifiedRunner {
            config,
            env,
            quad,
            true_mean,
            report,
        })
    }

    fn params(&self) -> Result<McUcbParams> {
        let declared = self.env.declared();
        let mut params = McUcbParams::new(
            self.config.b.unwrap_or(declared.b),
            self.config.f_max.unwrap_or(declared.f_max),
        )?;
        if let Some(delta) = self.config.delta {
            params = params.with_delta(delta)?;
        }
        if let Some(a) = self.config.a_override {
            params = params.with_a_override(a)?;
        }
        Ok(params)
    }

    fn row(&mut self, n: usize, strata: StrataSpec) -> Result<()> {
        let config = self.config;
        let algo = config.algo_or(AlgoChoice::McUcb);
        let (partition, auto_note) = build_partition(self.env.dim(), n, strata)?;
        if let Some(note) = auto_note {
            self.report.add_metadata("auto_k", note)?;
        }
        let sampler = StratifiedEnv::new(self.env, &partition)?;
        let truth = match self.quad {
            Some(q) => Some(sampler.truth(q)?),
            None => None,
        };
        let sigmas: Option<Vec<f64>> = truth.as_ref().map(|t| t.iter().map(|s| s.sigma).collect());
        let weights = partition.weights();
        let params = self.params()?;
        let k = partition.len();

        let runs = match algo {
            AlgoChoice::Crude => run_reps(config.reps, config.seed, |rng| crude_mc_run(self.env, n, rng))?,
            _ => {
                let allocator = match algo {
                    AlgoChoice::McUcb => Allocator::McUcb(params),
                    AlgoChoice::Uniform => Allocator::Uniform,
                    _ => Allocator::Oracle {
                        sigmas: sigmas
                            .clone()
                            .ok_or_else(|| Error::Precondition("the oracle needs true deviations".into()))?,
                    },
                };
                run_reps(config.reps, config.seed, |rng| allocator.run(&sampler, n, rng))?
            }
        };

        let estimates: Vec<f64> = runs.iter().map(|r| r.estimate).collect();
        let (mean_estimate, estimate_variance, _) = mean_and_stderr(&estimates);
        let (mse, mse_stderr) = match self.true_mean {
            Some(mu) => {
                let sq: Vec<f64> = estimates.iter().map(|e| (e - mu).powi(2)).collect();
                let (m, _, se) = mean_and_stderr(&sq);
                (Some(m), Some(se))
            }
            None => (None, None),
        };
        let stratified = algo != AlgoChoice::Crude;
        let (regret_mean, regret_stderr, oracle_risk, quality_value, regret_bound) = match (&sigmas, stratified) {
            (Some(sig), true) => {
                let regrets: Vec<f64> = runs
                    .iter()
                    .map(|r| pseudo_regret(&weights, sig, &r.counts_f64(), n))
                    .collect();
                let (m, _, se) = mean_and_stderr(&regrets);
                let big_sigma = weighted_sigma(&weights, sig);
                let q = quality(self.env, &partition, n, self.quad.expect("truth implies quadrature"))?;
                let bound = (algo == AlgoChoice::McUcb && n >= 4 * k)
                    .then(|| mcucb_regret_bound(big_sigma, params.b, params.f_max, k, n))
                    .transpose()?;
                (
                    Some(m),
                    Some(se),
                    Some(big_sigma * big_sigma / n as f64),
                    Some(q),
                    bound,
                )
            }
            _ => (None, None, None, None, None),
        };
        let mcucb = algo == AlgoChoice::McUcb;
        self.report.push_row(vec![
            config.env.as_str().into(),
            self.env.dim().into(),
            (if stratified { k } else { 1 }).into(),
            algo.name().into(),
            n.into(),
            config.reps.into(),
            config.seed.into(),
            mcucb.then_some(params.b).into(),
            mcucb.then_some(params.f_max).into(),
            mcucb
                .then(|| params.delta.unwrap_or(1.0 / (n as f64 * n as f64)))
                .into(),
            mcucb.then(|| params.width(n, k)).into(),
            mean_estimate.into(),
            estimate_variance.into(),
            self.true_mean.into(),
            mse.into(),
            mse_stderr.into(),
            regret_mean.into(),
            regret_stderr.into(),
            oracle_risk.into(),
            quality_value.into(),
            regret_bound.into(),
        ])
    }
}

/// The per-step trace of a single MC-UCB run (repetition 0) of an
/// `integrate` configuration.
pub fn run_trace(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    if config.algo_or(AlgoChoice::McUcb) != AlgoChoice::McUcb {
        return Err(Error::InvalidParameter("traces are recorded for mcucb only".into()));
    }
    let env = builtin_env(&config.env, config.dim)?;
    let runner = StratifiedRunner::new(config, &env)?;
    let params = runner.params()?.with_trace(true);
    let (partition, _) = build_partition(env.dim(), config.n, config.strata)?;
    let sampler = StratifiedEnv::new(&env, &partition)?;
    let run = crate::allocate::mcucb_run(&sampler, config.n, &params, &mut stream(config.seed, 0))?;
    let names: Vec<String> = (0..partition.len()).map(|i| format!("index_{i}")).collect();
    let mut columns = vec!["t", "chosen"];
    columns.extend(names.iter().map(String::as_str));
    let mut report = ExperimentReport::new(config.seed, &columns);
    for step in run.trace.unwrap_or_default() {
        let mut row: Vec<Cell> = vec![step.t.into(), step.chosen.into()];
        row.extend(step.indices.iter().map(|&v| Cell::Float(v)));
        report.push_row(row)?;
    }
    Ok(report)
}

fn signs_to_text(upsilon: &[i8]) -> String {
    upsilon.iter().map(|&u| if u > 0 { '+' } else { '-' }).collect()
}

fn lower_bound(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let algo = config.algo_or(AlgoChoice::McUcb);
    let b = config.b.unwrap_or(1.0);
    let f_max = config.f_max.unwrap_or(1.0);
    let allocator = match algo {
        AlgoChoice::McUcb => {
            let mut params = McUcbParams::new(b, f_max)?;
            if let Some(delta) = config.delta {
                params = params.with_delta(delta)?;
            }
            if let Some(a) = config.a_override {
                params = params.with_a_override(a)?;
            }
            Allocator::McUcb(params)
        }
        AlgoChoice::Uniform => Allocator::Uniform,
        AlgoChoice::Oracle => Allocator::Oracle { sigmas: Vec::new() },
        AlgoChoice::Crude => {
            return Err(Error::InvalidParameter(
                "crude sampling has no allocation regret".into(),
            ))
        }
    };
    let mut entries = Vec::new();
    for &k in &config.k_grid {
        for &n in &config.n_grid {
            entries.push(worst_case_regret(
                &allocator,
                k,
                n,
                config.env_samples,
                config.reps,
                config.seed,
            )?);
        }
    }
    let fits: ScalingReport = scaling_fit(&entries);
    let mut report = ExperimentReport::new(
        config.seed,
        &[
            "algo",
            "k",
            "n",
            "reps",
            "env_samples",
            "environments",
            "seed",
            "sigma",
            "mu",
            "worst_regret",
            "worst_regret_stderr",
            "worst_upsilon",
            "minimax_shape",
        ],
    );
    for s in &fits.n_slopes {
        report.add_metadata(&format!("n_slope_k{}", s.fixed), format!("{:.16e}", s.fit.slope))?;
    }
    for s in &fits.k_slopes {
        report.add_metadata(&format!("k_slope_n{}", s.fixed), format!("{:.16e}", s.fit.slope))?;
    }
    for e in &entries {
        let (sigma, mu) = sigma_for_budget(e.k, e.n)?;
        report.push_row(vec![
            algo.name().into(),
            e.k.into(),
            e.n.into(),
            e.reps.into(),
            config.env_samples.into(),
            e.environments.into(),
            config.seed.into(),
            sigma.into(),
            mu.into(),
            e.worst_regret.into(),
            e.std_error.into(),
            signs_to_text(&e.worst_upsilon).into(),
            minimax_regret_shape(1.0, e.k, e.n).into(),
        ])?;
    }
    Ok(report)
}

fn concentration(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let delta = config.delta.unwrap_or(0.05);
    let dists: Vec<(&str, NoiseSpec)> = match config.dist {
        DistChoice::Gaussian => vec![("gaussian", NoiseSpec::gaussian())],
        DistChoice::BoundedUniform => vec![("bounded-uniform", NoiseSpec::bounded_uniform())],
        DistChoice::All => vec![
            ("gaussian", NoiseSpec::gaussian()),
            ("bounded-uniform", NoiseSpec::bounded_uniform()),
        ],
    };
    let mut report = ExperimentReport::new(
        config.seed,
        &[
            "dist",
            "n",
            "delta",
            "trials",
            "seed",
            "b",
            "variance",
            "mean_bound",
            "stddev_bound",
            "mean_violation_rate",
            "stddev_violation_rate",
            "tolerance",
            "below_derivation_range",
        ],
    );
    for (name, noise) in dists {
        let dist = CoverageDistribution::standard(noise);
        for &n in &config.n_grid {
            let cov = coverage_test(&dist, n, delta, config.reps, config.seed)?;
            let (v, b) = (dist.variance(), dist.effective_b());
            report.push_row(vec![
                name.into(),
                n.into(),
                delta.into(),
                config.reps.into(),
                config.seed.into(),
                b.into(),
                v.into(),
                bernstein_bound(v, b, n, delta).into(),
                stddev_bound(v, b, n, delta).into(),
                cov.mean_violation_rate.into(),
                cov.stddev_violation_rate.into(),
                coverage_tolerance(delta, config.reps).into(),
                usize::from(cov.below_derivation_range).into(),
            ])?;
        }
    }
    Ok(report)
}

/// Width used for MC-UCB on the option when none is given: `150 log n`.
pub fn asian_default_width(n: usize) -> f64 {
    150.0 * (n as f64).ln()
}

fn asian(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let spec = AsianOptionSpec::default().with_strike(config.strike);
    spec.validate()?;
    let reference = if spec == AsianOptionSpec::default() {
        REFERENCE_PRICE
    } else {
        reference_price(&spec, 1, REFERENCE_PATHS, REFERENCE_SEED)?
    };
    let n = config.n;
    let width = config.a_override.unwrap_or_else(|| asian_default_width(n));
    let params = McUcbParams::new(config.b.unwrap_or(1.0), config.f_max.unwrap_or(1.0))?.with_a_override(width)?;
    let algos = match config.algo {
        Some(AlgoChoice::Crude) | Some(AlgoChoice::Oracle) => {
            return Err(Error::InvalidParameter(
                "the option experiment runs mcucb or uniform".into(),
            ))
        }
        Some(a) => vec![a],
        None => vec![AlgoChoice::McUcb, AlgoChoice::Uniform],
    };
    let mut report = ExperimentReport::new(
        config.seed,
        &[
            "K",
            "algo",
            "mse",
            "mse_stderr",
            "mean_estimate",
            "reps",
            "n",
            "strike",
            "width",
            "seed",
            "reference_price",
        ],
    );
    report.add_metadata("reference_stderr", format!("{:.16e}", reference.std_error))?;
    for &k in &config.k_grid {
        let env = AsianEnvironment::new(spec, k)?;
        for &algo in &algos {
            let allocator = if algo == AlgoChoice::McUcb {
                Allocator::McUcb(params)
            } else {
                Allocator::Uniform
            };
            let runs = run_reps(config.reps, config.seed, |rng| allocator.run(&env, n, rng))?;
            let estimates: Vec<f64> = runs.iter().map(|r| r.estimate).collect();
            let sq: Vec<f64> = estimates.iter().map(|e| (e - reference.price).powi(2)).collect();
            let (mse, _, mse_stderr) = mean_and_stderr(&sq);
            let (mean_estimate, _, _) = mean_and_stderr(&estimates);
            report.push_row(vec![
                env.num_strata().into(),
                algo.name().into(),
                mse.into(),
                mse_stderr.into(),
                mean_estimate.into(),
                config.reps.into(),
                n.into(),
                spec.strike.into(),
                (algo == AlgoChoice::McUcb).then_some(width).into(),
                config.seed.into(),
                reference.price.into(),
            ])?;
        }
    }
    Ok(report)
}
