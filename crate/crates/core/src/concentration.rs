//! Deviation bounds for empirical means and standard deviations of
//! sub-Gaussian samples, and Monte-Carlo checks of their coverage.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::NoiseSpec;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    MeanBernstein,
    StdDev,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSpec {
    pub kind: BoundKind,
    pub b: f64,
    pub n: usize,
    pub delta: f64,
    /// Average variance `σ̄²` for the mean bound, `V` for the deviation bound.
    pub variance_param: f64,
}

impl BoundSpec {
    pub fn new(kind: BoundKind, b: f64, n: usize, delta: f64, variance_param: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if !(b >= 0.0) || !(variance_param >= 0.0) {
            return Err(Error::InvalidParameter(
                "b and the variance parameter must be nonnegative".into(),
            ));
        }
        Ok(BoundSpec {
            kind,
            b,
            n,
            delta,
            variance_param,
        })
    }

    pub fn evaluate(&self) -> f64 {
        match self.kind {
            BoundKind::MeanBernstein => bernstein_bound(self.variance_param, self.b, self.n, self.delta),
            BoundKind::StdDev => stddev_bound(self.variance_param, self.b, self.n, self.delta),
        }
    }
}

/// `√(2 σ̄² log(2/δ) / n) + b log(2/δ) / n`.
pub fn bernstein_bound(mean_variance: f64, b: f64, n: usize, delta: f64) -> f64 {
    let l = (2.0 / delta).ln();
    let nf = n as f64;
    (2.0 * mean_variance * l / nf).sqrt() + b * l / nf
}

/// `2 √((1 + 3b + 4V) log(2/δ) / n)`.
pub fn stddev_bound(variance: f64, b: f64, n: usize, delta: f64) -> f64 {
    2.0 * ((1.0 + 3.0 * b + 4.0 * variance) * (2.0 / delta).ln() / n as f64).sqrt()
}

/// The per-sample-count confidence level at which [`stddev_bound`] with
/// `V = f_max²` and `n = T` equals `A/√T` for MC-UCB's width `A` at overall
/// level `δ'` over `K` strata and budget `budget`.
pub fn width_confidence(delta_prime: f64, budget: usize, k: usize) -> f64 {
    delta_prime / (budget as f64 * k as f64)
}

/// A distribution `mean + scale·ε` with `ε` from a noise family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageDistribution {
    pub noise: NoiseSpec,
    pub mean: f64,
    pub scale: f64,
}

impl CoverageDistribution {
    pub fn standard(noise: NoiseSpec) -> Self {
        CoverageDistribution {
            noise,
            mean: 0.0,
            scale: 1.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        CoverageDistribution {
            noise: NoiseSpec::gaussian(),
            mean: value,
            scale: 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        self.scale * self.scale
    }

    /// Sub-Gaussian scale of `X - mean` and of `(X - mean)² - V`.
    pub fn effective_b(&self) -> f64 {
        self.noise.b() * self.scale.max(self.scale * self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub n: usize,
    pub delta: f64,
    pub trials: usize,
    pub mean_violation_rate: f64,
    pub stddev_violation_rate: f64,
    /// `n < b log(2/δ)`: below the sample size the deviation bound's
    /// derivation assumes.
    pub below_derivation_range: bool,
}

/// Runs `trials` independent batches of `n` samples and records how often
/// the mean and standard-deviation bounds are violated.
pub fn coverage_test(
    dist: &CoverageDistribution,
    n: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if trials < 1000 {
        return Err(Error::InvalidParameter(format!(
            "coverage needs at least 1000 trials, got {trials}"
        )));
    }
    if n < 1 || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter("need n >= 1 and delta in (0,1)".into()));
    }
    let v = dist.variance();
    let b = dist.effective_b();
    let mean_radius = bernstein_bound(v, b, n, delta);
    let std_radius = stddev_bound(v, b, n, delta);
    let violations: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, trial as u64);
            let xs: Vec<f64> = (0..n)
                .map(|_| dist.mean + dist.scale * dist.noise.sample(&mut rng))
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let v_hat = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            (
                (mean - dist.mean).abs() > mean_radius,
                (v_hat.sqrt() - v.sqrt()).abs() > std_radius,
            )
        })
        .collect();
    let count = |pick: fn(&(bool, bool)) -> bool| violations.iter().filter(|v| pick(v)).count() as f64 / trials as f64;
    Ok(CoverageReport {
        n,
        delta,
        trials,
        mean_violation_rate: count(|v| v.0),
        stddev_violation_rate: count(|v| v.1),
        below_derivation_range: (n as f64) < b * (2.0 / delta).ln(),
    })
}

/// `δ + 3√(δ(1-δ)/trials)`.
pub fn coverage_tolerance(delta: f64, trials: usize) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}
