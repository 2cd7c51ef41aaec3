//! Two-level Bernoulli environments realising the minimax regret rate, the
//! worst-case regret experiment over them, and log-log slope fitting.

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use crate::allocate::Allocator;
use crate::error::{Error, Result};
use crate::metrics::pseudo_regret;
use crate::rng::{child_seed, stream};
use crate::sampler::StratumSampler;

/// `2K` Bernoulli arms of weight `1/(2K)`: arm `k < K` has parameter
/// `μ + υ_k μ/2`, the other `K` arms have parameter `1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundEnv {
    k_half: usize,
    mu: f64,
    upsilon: Vec<i8>,
    params: Vec<f64>,
}

/// Builds the environment for signs `upsilon`; `mu` must lie in `(0, 1/2)`.
pub fn make_lower_bound_env(k: usize, mu: f64, upsilon: &[i8]) -> Result<LowerBoundEnv> {
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one informative arm".into()));
    }
    if !(mu > 0.0 && mu < 0.5) {
        return Err(Error::InvalidParameter(format!("mu must lie in (0, 1/2), got {mu}")));
    }
    if upsilon.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: upsilon.len(),
        });
    }
    if let Some(&bad) = upsilon.iter().find(|&&u| u != 1 && u != -1) {
        return Err(Error::InvalidParameter(format!(
            "sign vector entries must be +1 or -1, got {bad}"
        )));
    }
    let params = upsilon
        .iter()
        .map(|&u| mu + f64::from(u) * mu / 2.0)
        .chain(std::iter::repeat_n(0.5, k))
        .collect();
    Ok(LowerBoundEnv {
        k_half: k,
        mu,
        upsilon: upsilon.to_vec(),
        params,
    })
}

impl LowerBoundEnv {
    pub fn k_half(&self) -> usize {
        self.k_half
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn upsilon(&self) -> &[i8] {
        &self.upsilon
    }

    pub fn bernoulli_params(&self) -> &[f64] {
        &self.params
    }

    pub fn true_sigmas(&self) -> Vec<f64> {
        self.params.iter().map(|p| (p * (1.0 - p)).sqrt()).collect()
    }

    pub fn true_mean(&self) -> f64 {
        self.params.iter().sum::<f64>() / self.params.len() as f64
    }

    /// Samples are bounded in `[0, 1]`, so the noise scale is 1.
    pub fn declared_b(&self) -> f64 {
        1.0
    }
}

impl StratumSampler for LowerBoundEnv {
    fn num_strata(&self) -> usize {
        2 * self.k_half
    }

    fn weight(&self, _k: usize) -> f64 {
        1.0 / (2 * self.k_half) as f64
    }

    fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        if rng.gen::<f64>() < self.params[k] {
            1.0
        } else {
            0.0
        }
    }
}

/// `σ = (K/n)^{1/3}/7` and the smaller root `μ` of `μ(1-μ) = σ²`.
pub fn sigma_for_budget(k: usize, n: usize) -> Result<(f64, f64)> {
    if k == 0 || n < k {
        return Err(Error::InfeasibleBudget { n, required: k.max(1) });
    }
    let sigma = (k as f64 / n as f64).cbrt() / 7.0;
    let disc = 1.0 - 4.0 * sigma * sigma;
    if disc <= 0.0 {
        return Err(Error::InfeasibleBudget { n, required: k });
    }
    // 2σ²/(1+√disc) is the cancellation-free form of (1-√disc)/2
    let mu = 2.0 * sigma * sigma / (1.0 + disc.sqrt());
    if mu >= 0.5 {
        return Err(Error::InfeasibleBudget { n, required: k });
    }
    Ok((sigma, mu))
}

/// Worst mean pseudo-regret over the sign vectors tried at one `(K, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseEntry {
    pub k: usize,
    pub n: usize,
    pub worst_regret: f64,
    pub std_error: f64,
    pub worst_upsilon: Vec<i8>,
    pub environments: usize,
    pub reps: usize,
}

fn sign_vectors(k: usize, env_samples: usize, seed: u64) -> Vec<Vec<i8>> {
    if k <= 10 {
        return (0..1u32 << k)
            .map(|bits| (0..k).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect())
            .collect();
    }
    let mut out = vec![vec![1; k], vec![-1; k]];
    let mut rng = stream(child_seed(seed, 0x5167), 0);
    out.extend((0..env_samples).map(|_| (0..k).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect()));
    out
}

/// Mean pseudo-regret over `reps` runs for every sign vector, maximised over
/// sign vectors. All `2^K` vectors are tried when `K <= 10`; otherwise
/// `env_samples` random vectors plus the all-`+1` and all-`-1` vectors.
/// An [`Allocator::Oracle`] is given each environment's true deviations.
pub fn worst_case_regret(
    allocator: &Allocator,
    k: usize,
    n: usize,
    env_samples: usize,
    reps: usize,
    master_seed: u64,
) -> Result<WorstCaseEntry> {
    if reps < 100 {
        return Err(Error::InvalidParameter(format!(
            "worst-case regret needs at least 100 reps, got {reps}"
        )));
    }
    if env_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sampled environment".into()));
    }
    let (_, mu) = sigma_for_budget(k, n)?;
    let vectors = sign_vectors(k, env_samples, master_seed);
    let per_env: Vec<(f64, f64)> = vectors
        .par_iter()
        .enumerate()
        .map(|(e, ups)| {
            let env = make_lower_bound_env(k, mu, ups)?;
            let sigmas = env.true_sigmas();
            let weights = env.weights();
            let alloc = match allocator {
                Allocator::Oracle { .. } => Allocator::Oracle { sigmas: sigmas.clone() },
                other => other.clone(),
            };
            let env_seed = child_seed(master_seed, e as u64);
            let regrets = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream(env_seed, r as u64);
                    let run = alloc.run(&env, n, &mut rng)?;
                    Ok(pseudo_regret(&weights, &sigmas, &run.counts_f64(), n))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = regrets.iter().sum::<f64>() / reps as f64;
            let var = regrets.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            Ok((mean, (var / reps as f64).sqrt()))
        })
        .collect::<Result<_>>()?;
    let (best, &(worst_regret, std_error)) = per_env
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &(f64, f64))>, (i, x)| match acc {
            Some((_, y)) if y.0 >= x.0 => acc,
            _ => Some((i, x)),
        })
        .expect("at least one environment");
    Ok(WorstCaseEntry {
        k,
        n,
        worst_regret,
        std_error,
        worst_upsilon: vectors[best].clone(),
        environments: vectors.len(),
        reps,
    })
}

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// `log y - (intercept + slope·log x)` for every point used.
    pub residuals: Vec<f64>,
    /// Points dropped because `x` or `y` was not positive.
    pub excluded: usize,
}

pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let excluded = xs.len() - pts.len();
    if excluded > 0 {
        warn!("log-log fit: excluded {excluded} nonpositive points");
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "log-log fit needs 3 positive points, got {}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("log-log fit needs distinct x values".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = pts.iter().map(|p| p.1 - intercept - slope * p.0).collect();
    Ok(LogLogFit {
        slope,
        intercept,
        residuals,
        excluded,
    })
}

/// Slope of a fit along one axis of the grid, the other held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSlope {
    pub fixed: usize,
    pub fit: LogLogFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub entries: Vec<WorstCaseEntry>,
    /// Fits against `n` at each `K` with at least three `n` values.
    pub n_slopes: Vec<AxisSlope>,
    /// Fits against `K` at each `n` with at least three `K` values.
    pub k_slopes: Vec<AxisSlope>,
}

/// Fits worst-case regret against `n` at fixed `K` and against `K` at fixed `n`.
pub fn scaling_fit(entries: &[WorstCaseEntry]) -> ScalingReport {
    let along = |fixed_of: fn(&WorstCaseEntry) -> usize, swept_of: fn(&WorstCaseEntry) -> usize| {
        let mut fixed: Vec<usize> = entries.iter().map(fixed_of).collect();
        fixed.sort_unstable();
        fixed.dedup();
        fixed
            .into_iter()
            .filter_map(|v| {
                let (xs, ys): (Vec<f64>, Vec<f64>) = entries
                    .iter()
                    .filter(|e| fixed_of(e) == v)
                    .map(|e| (swept_of(e) as f64, e.worst_regret))
                    .unzip();
                log_log_fit(&xs, &ys).ok().map(|fit| AxisSlope { fixed: v, fit })
            })
            .collect()
    };
    ScalingReport {
        entries: entries.to_vec(),
        n_slopes: along(|e| e.k, |e| e.n),
        k_slopes: along(|e| e.n, |e| e.k),
    }
}
