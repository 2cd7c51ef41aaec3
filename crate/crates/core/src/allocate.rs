//! Sequential allocation of a sampling budget over strata: MC-UCB and the
//! uniform, oracle and crude Monte-Carlo baselines.

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::optimal_allocation;
use crate::model::Environment;
use crate::sampler::StratumSampler;

/// Which normalisation the within-stratum variance estimate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceForm {
    /// `(1/T) Σ (X - μ̂)²`, the form MC-UCB uses in its index.
    #[default]
    Biased,
    /// `(1/(T-1)) Σ (X - μ̂)²`.
    Unbiased,
}

/// Running count, mean and centred sum of squares for one stratum (Welford
/// updates, so a constant stream keeps its exact mean and zero variance).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        let mut acc = Self::new();
        samples.iter().for_each(|&x| acc.push(x));
        acc
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `Σ X`.
    pub fn sum(&self) -> f64 {
        self.mean * self.count as f64
    }

    /// `Σ (X - μ̂)²`.
    pub fn centered_sum_sq(&self) -> f64 {
        self.m2
    }

    pub fn mean(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        Ok(self.mean)
    }

    /// Empirical standard deviation; the unbiased form needs two samples.
    pub fn std_dev(&self, form: VarianceForm) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let t = self.count as f64;
        let m2 = self.m2.max(0.0);
        match form {
            VarianceForm::Biased => Ok((m2 / t).sqrt()),
            VarianceForm::Unbiased if self.count >= 2 => Ok((m2 / (t - 1.0)).sqrt()),
            VarianceForm::Unbiased => Err(Error::EmptyAccumulator),
        }
    }
}

/// `(μ̂, σ̂)` of an accumulator, with the biased `1/T` variance.
pub fn empirical_stats(acc: &Accumulator) -> Result<(f64, f64)> {
    Ok((acc.mean()?, acc.std_dev(VarianceForm::Biased)?))
}

/// MC-UCB index `B = (w/T)(σ̂ + A/√T)`.
pub fn ucb_index(weight: f64, acc: &Accumulator, width: f64) -> Result<f64> {
    let sigma_hat = acc.std_dev(VarianceForm::Biased)?;
    Ok(index_value(weight, acc.count() as f64, sigma_hat, width))
}

#[inline]
fn index_value(weight: f64, count: f64, sigma_hat: f64, width: f64) -> f64 {
    weight / count * (sigma_hat + width / count.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McUcbParams {
    /// Sub-Gaussian scale of the noise.
    pub b: f64,
    /// Bound on `|f|` and `s`.
    pub f_max: f64,
    /// Confidence level; `None` means `1/n²`.
    pub delta: Option<f64>,
    /// Replaces the computed width entirely when set.
    pub a_override: Option<f64>,
    pub variance: VarianceForm,
    pub record_trace: bool,
}

impl McUcbParams {
    pub fn new(b: f64, f_max: f64) -> Result<Self> {
        let params = McUcbParams {
            b,
            f_max,
            delta: None,
            a_override: None,
            variance: VarianceForm::Biased,
            record_trace: false,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = Some(delta);
        self.validate()?;
        Ok(self)
    }

    pub fn with_a_override(mut self, a: f64) -> Result<Self> {
        self.a_override = Some(a);
        self.validate()?;
        Ok(self)
    }

    pub fn with_variance(mut self, form: VarianceForm) -> Self {
        self.variance = form;
        self
    }

    pub fn with_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidParameter(format!("b must be positive, got {}", self.b)));
        }
        if !(self.f_max > 0.0 && self.f_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "f_max must be positive, got {}",
                self.f_max
            )));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {d}")));
            }
        }
        if let Some(a) = self.a_override {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!("A override must be positive, got {a}")));
            }
        }
        Ok(())
    }

    /// Confidence width `A = 2√((1 + 3b + 4 f_max²) log(2nK/δ))`, or the override.
    pub fn width(&self, n: usize, k: usize) -> f64 {
        if let Some(a) = self.a_override {
            return a;
        }
        let nf = n as f64;
        let delta = self.delta.unwrap_or(1.0 / (nf * nf));
        mcucb_width(self.b, self.f_max, n, k, delta)
    }
}

/// `2√((1 + 3b + 4 f_max²) log(2nK/δ))`.
pub fn mcucb_width(b: f64, f_max: f64, n: usize, k: usize, delta: f64) -> f64 {
    2.0 * ((1.0 + 3.0 * b + 4.0 * f_max * f_max) * (2.0 * n as f64 * k as f64 / delta).ln()).sqrt()
}

/// One MC-UCB decision.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub chosen: usize,
    pub indices: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub counts: Vec<usize>,
    pub stratum_means: Vec<f64>,
    /// `Σ_k w_k μ̂_k`.
    pub estimate: f64,
    pub trace: Option<Vec<TraceStep>>,
}

impl RunResult {
    fn from_accumulators<S: StratumSampler + ?Sized>(
        sampler: &S,
        accs: &[Accumulator],
        trace: Option<Vec<TraceStep>>,
    ) -> Self {
        let counts: Vec<usize> = accs.iter().map(|a| a.count() as usize).collect();
        // an empty stratum (zero weight·σ under the oracle) contributes nothing
        let stratum_means: Vec<f64> = accs.iter().map(|a| a.mean().unwrap_or(0.0)).collect();
        let estimate = stratum_means
            .iter()
            .enumerate()
            .map(|(k, m)| sampler.weight(k) * m)
            .sum();
        RunResult {
            counts,
            stratum_means,
            estimate,
            trace,
        }
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

/// Runs MC-UCB with budget `n`: two samples per stratum in index order, then
/// at every step one sample in the stratum maximising the index (ties go to
/// the lowest index).
pub fn mcucb_run<S, R>(sampler: &S, n: usize, params: &McUcbParams, rng: &mut R) -> Result<RunResult>
where
    S: StratumSampler + ?Sized,
    R: Rng + ?Sized,
{
    params.validate()?;
    let k = sampler.num_strata();
    if n < 2 * k {
        return Err(Error::InfeasibleBudget { n, required: 2 * k });
    }
    if n < 4 * k {
        warn!(
            "MC-UCB budget n = {n} is below 4K = {}; the regret guarantee does not cover this regime",
            4 * k
        );
    }
    let width = params.width(n, k);
    let weights = sampler.weights();
    let mut accs = vec![Accumulator::new(); k];
    for (stratum, acc) in accs.iter_mut().enumerate() {
        for _ in 0..2 {
            acc.push(sampler.sample(stratum, rng));
        }
    }
    let mut trace = params.record_trace.then(|| Vec::with_capacity(n - 2 * k));
    let index_of = |stratum: usize, acc: &Accumulator| -> Result<f64> {
        Ok(index_value(
            weights[stratum],
            acc.count() as f64,
            acc.std_dev(params.variance)?,
            width,
        ))
    };
    // only the sampled stratum's index changes between steps
    let mut indices = accs
        .iter()
        .enumerate()
        .map(|(i, acc)| index_of(i, acc))
        .collect::<Result<Vec<f64>>>()?;
    for t in (2 * k + 1)..=n {
        let mut best = 0;
        for stratum in 1..k {
            if indices[stratum] > indices[best] {
                best = stratum;
            }
        }
        if let Some(trace) = trace.as_mut() {
            trace.push(TraceStep {
                t,
                chosen: best,
                indices: indices.clone(),
            });
        }
        accs[best].push(sampler.sample(best, rng));
        indices[best] = index_of(best, &accs[best])?;
    }
    Ok(RunResult::from_accumulators(sampler, &accs, trace))
}

/// Samples each stratum a fixed number of times, stratum by stratum.
pub fn fixed_allocation_run<S, R>(sampler: &S, counts: &[usize], rng: &mut R) -> Result<RunResult>
where
    S: StratumSampler + ?Sized,
    R: Rng + ?Sized,
{
    if counts.len() != sampler.num_strata() {
        return Err(Error::InvalidParameter(format!(
            "{} counts for {} strata",
            counts.len(),
            sampler.num_strata()
        )));
    }
    let accs: Vec<Accumulator> = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let mut acc = Accumulator::new();
            for _ in 0..c {
                acc.push(sampler.sample(k, rng));
            }
            acc
        })
        .collect();
    Ok(RunResult::from_accumulators(sampler, &accs, None))
}

/// `floor(n/K)` per stratum, one extra for the first `n mod K`.
pub fn uniform_counts(n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || n < k {
        return Err(Error::InfeasibleBudget { n, required: k.max(1) });
    }
    Ok((0..k).map(|i| n / k + usize::from(i < n % k)).collect())
}

pub fn uniform_stratified_run<S, R>(sampler: &S, n: usize, rng: &mut R) -> Result<RunResult>
where
    S: StratumSampler + ?Sized,
    R: Rng + ?Sized,
{
    let counts = uniform_counts(n, sampler.num_strata())?;
    fixed_allocation_run(sampler, &counts, rng)
}

/// Integer version of the oracle allocation: largest-remainder rounding of
/// `n w_k σ_k / Σ w_i σ_i`, with at least one sample wherever `w_k σ_k > 0`.
/// Falls back to the uniform allocation when every `w_k σ_k` is zero.
pub fn oracle_counts(weights: &[f64], sigmas: &[f64], n: usize) -> Result<Vec<usize>> {
    let k = weights.len();
    if k == 0 || n < k {
        return Err(Error::InfeasibleBudget { n, required: k.max(1) });
    }
    let targets = match optimal_allocation(weights, sigmas, n) {
        Ok(t) => t.0,
        Err(Error::DegenerateProblem) => {
            warn!("every stratum has zero variance; any allocation is optimal, using uniform");
            return uniform_counts(n, k);
        }
        Err(e) => return Err(e),
    };
    let positive: Vec<bool> = weights.iter().zip(sigmas).map(|(w, s)| w * s > 0.0).collect();
    let mut counts: Vec<usize> = targets
        .iter()
        .zip(&positive)
        .map(|(&t, &pos)| {
            let base = t.floor() as usize;
            if pos {
                base.max(1)
            } else {
                base
            }
        })
        .collect();
    let mut total: usize = counts.iter().sum();
    // forced minimums can overshoot: take back from the most over-served strata
    while total > n {
        let (i, _) = counts
            .iter()
            .zip(&targets)
            .enumerate()
            .filter(|(i, (&c, _))| c > usize::from(positive[*i]))
            .map(|(i, (&c, &t))| (i, c as f64 - t))
            .fold(
                (usize::MAX, f64::NEG_INFINITY),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        counts[i] -= 1;
        total -= 1;
    }
    while total < n {
        let (i, _) = counts
            .iter()
            .zip(&targets)
            .map(|(&c, &t)| t - c as f64)
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        counts[i] += 1;
        total += 1;
    }
    Ok(counts)
}

/// Samples according to the rounded oracle allocation for the given true
/// standard deviations.
pub fn oracle_run<S, R>(sampler: &S, sigmas: &[f64], n: usize, rng: &mut R) -> Result<RunResult>
where
    S: StratumSampler + ?Sized,
    R: Rng + ?Sized,
{
    let counts = oracle_counts(&sampler.weights(), sigmas, n)?;
    fixed_allocation_run(sampler, &counts, rng)
}

/// Plain Monte-Carlo: `n` uniform points on the whole cube.
pub fn crude_mc_run<R: Rng + ?Sized>(env: &Environment, n: usize, rng: &mut R) -> Result<RunResult> {
    if n == 0 {
        return Err(Error::InfeasibleBudget { n, required: 1 });
    }
    let mut x = vec![0.0; env.dim()];
    let mut acc = Accumulator::new();
    for _ in 0..n {
        x.iter_mut().for_each(|c| *c = rng.gen::<f64>());
        acc.push(env.evaluate_at(&x, rng));
    }
    let mean = acc.mean()?;
    Ok(RunResult {
        counts: vec![n],
        stratum_means: vec![mean],
        estimate: mean,
        trace: None,
    })
}

/// The allocation strategies, for harnesses that treat them uniformly.
#[derive(Debug, Clone, PartialEq)]
pub enum Allocator {
    McUcb(McUcbParams),
    Uniform,
    /// Rounded oracle allocation for the given true standard deviations.
    Oracle {
        sigmas: Vec<f64>,
    },
}

impl Allocator {
    pub fn name(&self) -> &'static str {
        match self {
            Allocator::McUcb(_) => "mcucb",
            Allocator::Uniform => "uniform",
            Allocator::Oracle { .. } => "oracle",
        }
    }

    pub fn run<S, R>(&self, sampler: &S, n: usize, rng: &mut R) -> Result<RunResult>
    where
        S: StratumSampler + ?Sized,
        R: Rng + ?Sized,
    {
        match self {
            Allocator::McUcb(params) => mcucb_run(sampler, n, params, rng),
            Allocator::Uniform => uniform_stratified_run(sampler, n, rng),
            Allocator::Oracle { sigmas } => oracle_run(sampler, sigmas, n, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{pseudo_regret, pseudo_risk, weighted_sigma, QuadratureSpec};
    use crate::model::{builtin_env, DeclaredConstants, NoiseSpec};
    use crate::partition::{Partition, Stratum};
    use crate::rng::stream;
    use crate::sampler::StratifiedEnv;
    use std::sync::Arc;

    /// Arms with fixed Gaussian laws, bypassing the point domain.
    struct GaussianArms {
        weights: Vec<f64>,
        means: Vec<f64>,
        sigmas: Vec<f64>,
    }

    impl StratumSampler for GaussianArms {
        fn num_strata(&self) -> usize {
            self.weights.len()
        }
        fn weight(&self, k: usize) -> f64 {
            self.weights[k]
        }
        fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
            self.means[k] + self.sigmas[k] * NoiseSpec::gaussian().sample(rng)
        }
    }

    #[test]
    fn empirical_stats_examples() {
        assert_eq!(
            empirical_stats(&Accumulator::from_samples(&[1.0, 1.0])).unwrap(),
            (1.0, 0.0)
        );
        assert_eq!(
            empirical_stats(&Accumulator::from_samples(&[0.0, 2.0])).unwrap(),
            (1.0, 1.0)
        );
        let (m, s) = empirical_stats(&Accumulator::from_samples(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(empirical_stats(&Accumulator::new()), Err(Error::EmptyAccumulator));
        let acc = Accumulator::from_samples(&[1.0, 2.0, 3.0]);
        assert!((acc.std_dev(VarianceForm::Unbiased).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ucb_index_examples() {
        let mut acc = Accumulator::from_samples(&[0.0, 2.0, 0.0, 2.0]);
        assert_eq!(acc.std_dev(VarianceForm::Biased).unwrap(), 1.0);
        assert!((ucb_index(0.5, &acc, 2.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((ucb_index(0.5, &acc, 0.0).unwrap() - 0.5 * 1.0 / 4.0).abs() < 1e-15);
        let mut prev = ucb_index(0.5, &acc, 2.0).unwrap();
        for _ in 0..10 {
            acc.push(0.0);
            acc.push(2.0);
            let next = ucb_index(0.5, &acc, 2.0).unwrap();
            assert!(next < prev);
            prev = next;
        }
        assert_eq!(ucb_index(0.5, &Accumulator::new(), 1.0), Err(Error::EmptyAccumulator));
    }

    #[test]
    fn width_formula_and_override() {
        let p = McUcbParams::new(1.0, 1.0).unwrap();
        let expected = 2.0 * (8.0 * (2.0 * 100.0 * 4.0 * 10_000.0f64).ln()).sqrt();
        assert!((p.width(100, 4) - expected).abs() < 1e-12);
        let p = p.with_delta(0.1).unwrap();
        assert!((p.width(100, 4) - 2.0 * (8.0 * 8000.0f64.ln()).sqrt()).abs() < 1e-12);
        let p = p.with_a_override(7.0).unwrap();
        assert_eq!(p.width(100, 4), 7.0);
        assert!(McUcbParams::new(0.0, 1.0).is_err());
        assert!(McUcbParams::new(1.0, 1.0).unwrap().with_delta(1.0).is_err());
    }

    #[test]
    fn mcucb_single_stratum() {
        let env = builtin_env("constant-noise(1)", 1).unwrap();
        let part = Partition::hypercubic(1, 1).unwrap();
        let src = StratifiedEnv::new(&env, &part).unwrap();
        let params = McUcbParams::new(1.0, 1.0).unwrap();
        let res = mcucb_run(&src, 50, &params, &mut stream(1, 0)).unwrap();
        assert_eq!(res.counts, vec![50]);
        let mut rng = stream(1, 0);
        let direct = (0..50).map(|_| src.sample(0, &mut rng)).sum::<f64>() / 50.0;
        assert!((res.estimate - direct).abs() < 1e-12);
    }

    #[test]
    fn mcucb_budget_checks() {
        let env = builtin_env("linear", 1).unwrap();
        let part = Partition::hypercubic(1, 4).unwrap();
        let src = StratifiedEnv::new(&env, &part).unwrap();
        let params = McUcbParams::new(1.0, 1.0).unwrap();
        assert_eq!(
            mcucb_run(&src, 7, &params, &mut stream(0, 0)),
            Err(Error::InfeasibleBudget { n: 7, required: 8 })
        );
        // between 2K and 4K: runs, only warns
        let res = mcucb_run(&src, 10, &params, &mut stream(0, 0)).unwrap();
        assert_eq!(res.counts.iter().sum::<usize>(), 10);
    }

    #[test]
    fn mcucb_invariants_and_determinism() {
        let env = builtin_env("heteroscedastic-ramp", 1).unwrap();
        let part = Partition::hypercubic(1, 8).unwrap();
        let src = StratifiedEnv::new(&env, &part).unwrap();
        let params = McUcbParams::new(1.0, 1.0).unwrap().with_trace(true);
        for seed in 0..20 {
            let a = mcucb_run(&src, 300, &params, &mut stream(seed, 0)).unwrap();
            let b = mcucb_run(&src, 300, &params, &mut stream(seed, 0)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.counts.iter().sum::<usize>(), 300);
            assert!(a.counts.iter().all(|&c| c >= 2));
            let est: f64 = a.stratum_means.iter().zip(part.weights()).map(|(m, w)| w * m).sum();
            assert_eq!(est.to_bits(), a.estimate.to_bits());
            let trace = a.trace.unwrap();
            assert_eq!(trace.len(), 300 - 16);
            assert_eq!(trace[0].t, 17);
            for step in &trace {
                let max = step.indices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let first = step.indices.iter().position(|&v| v == max).unwrap();
                assert_eq!(step.chosen, first);
            }
        }
    }

    #[test]
    fn mcucb_ties_go_to_lowest_index() {
        // constant strata: every index is identical at every step
        let arms = GaussianArms {
            weights: vec![0.25; 4],
            means: vec![1.0; 4],
            sigmas: vec![0.0; 4],
        };
        let params = McUcbParams::new(1.0, 1.0).unwrap().with_trace(true);
        let res = mcucb_run(&arms, 9, &params, &mut stream(0, 0)).unwrap();
        assert_eq!(res.counts, vec![3, 2, 2, 2]);
        assert_eq!(res.trace.unwrap()[0].chosen, 0);
    }

    #[test]
    fn mcucb_symmetric_strata_split_evenly() {
        let env = builtin_env("constant-noise(1)", 1).unwrap();
        let part = Partition::hypercubic(1, 2).unwrap();
        let src = StratifiedEnv::new(&env, &part).unwrap();
        let params = McUcbParams::new(1.0, 1.0).unwrap();
        let n = 200;
        let runs = 1000;
        let frac: f64 = (0..runs)
            .map(|r| mcucb_run(&src, n, &params, &mut stream(42, r)).unwrap().counts[0] as f64 / n as f64)
            .sum::<f64>()
            / runs as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn mcucb_min_pull_bound_holds() {
        // σ = [1, 0]: unit noise on the left half, a noiseless constant on the right
        let env = Environment::new(
            "split-noise",
            1,
            Arc::new(|_: &[f64]| 0.0),
            Arc::new(|x: &[f64]| if x[0] < 0.5 { 1.0 } else { 0.0 }),
            NoiseSpec::gaussian(),
            DeclaredConstants {
                holder_m: f64::MAX,
                alpha: 1.0,
                f_max: 1.0,
                b: 1.0,
            },
        )
        .unwrap();
        let part = Partition::hypercubic(1, 2).unwrap();
        let src = StratifiedEnv::new(&env, &part).unwrap();
        let params = McUcbParams::new(1.0, 1.0).unwrap();
        let n = 1000;
        let a = params.width(n, 2);
        let floor = (2.0 * a / (1.0 + 2.0 * a)).powf(2.0 / 3.0) * (n as f64 / 2.0).powf(2.0 / 3.0);
        let runs = 1000;
        let ok = (0..runs)
            .filter(|&r| mcucb_run(&src, n, &params, &mut stream(7, r)).unwrap().counts[1] as f64 >= floor)
            .count();
        let delta = 1.0 / (n * n) as f64;
        assert!(
            ok as f64 >= (1.0 - 2.0 * delta) * runs as f64,
            "{ok} of {runs} above {floor}"
        );
    }

    #[test]
    fn uniform_counts_examples() {
        assert_eq!(uniform_counts(8, 4).unwrap(), vec![2, 2, 2, 2]);
        assert_eq!(uniform_counts(10, 4).unwrap(), vec![3, 3, 2, 2]);
        assert_eq!(uniform_counts(3, 4), Err(Error::InfeasibleBudget { n: 3, required: 4 }));
    }

    #[test]
    fn uniform_run_is_unbiased() {
        let env = builtin_env("linear", 1).unwrap();
        let part = Partition::hypercubic(1, 4).unwrap();
        let src = StratifiedEnv::new(&env, &part).unwrap();
        let reps = 10_000;
        let n = 10;
        let mean = (0..reps)
            .map(|r| uniform_stratified_run(&src, n, &mut stream(3, r)).unwrap().estimate)
            .sum::<f64>()
            / reps as f64;
        let truth = src.truth(QuadratureSpec::new(1024).unwrap()).unwrap();
        let sigmas: Vec<f64> = truth.iter().map(|t| t.sigma).collect();
        let risk = pseudo_risk(&part.weights(), &sigmas, &[3.0, 3.0, 2.0, 2.0]);
        assert!((mean - 0.5).abs() <= 4.0 * (risk / reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn oracle_counts_examples() {
        assert_eq!(oracle_counts(&[0.25; 4], &[2.0; 4], 10).unwrap(), vec![3, 3, 2, 2]);
        assert_eq!(oracle_counts(&[0.5, 0.5], &[3.0, 1.0], 100).unwrap(), vec![75, 25]);
        // forced minimum of one sample
        assert_eq!(oracle_counts(&[0.5, 0.5], &[1000.0, 1.0], 10).unwrap(), vec![9, 1]);
        // zero-variance strata may be left empty
        assert_eq!(oracle_counts(&[0.5, 0.5], &[1.0, 0.0], 10).unwrap(), vec![10, 0]);
        // degenerate: uniform
        assert_eq!(oracle_counts(&[0.5, 0.5], &[0.0, 0.0], 5).unwrap(), vec![3, 2]);
        assert!(oracle_counts(&[0.5, 0.5], &[1.0, 1.0], 1).is_err());
    }

    #[test]
    fn oracle_rounding_loss_is_small() {
        let mut rng = stream(99, 0);
        for _ in 0..500 {
            let k = rng.gen_range(1..12);
            let n = rng.gen_range(k..400);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let s: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..3.0)).collect();
            let counts = oracle_counts(&w, &s, n).unwrap();
            assert_eq!(counts.iter().sum::<usize>(), n);
            let risk = pseudo_risk(&w, &s, &counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
            let oracle = weighted_sigma(&w, &s).powi(2) / n as f64;
            assert!(
                risk <= oracle * (1.0 + 2.0 * k as f64 / n as f64) + 1e-15,
                "k={k} n={n}"
            );
        }
    }

    #[test]
    fn oracle_run_matches_equal_sigmas_to_uniform() {
        let env = builtin_env("constant-noise(1)", 1).unwrap();
        let part = Partition::hypercubic(1, 4).unwrap();
        let src = StratifiedEnv::new(&env, &part).unwrap();
        let res = oracle_run(&src, &[1.0; 4], 10, &mut stream(0, 0)).unwrap();
        assert_eq!(res.counts, uniform_counts(10, 4).unwrap());
    }

    #[test]
    fn crude_mc_behaviour() {
        let c = 0.3;
        let env = Environment::new(
            "c",
            2,
            Arc::new(move |_: &[f64]| c),
            Arc::new(|_: &[f64]| 0.0),
            NoiseSpec::gaussian(),
            DeclaredConstants {
                holder_m: 0.0,
                alpha: 1.0,
                f_max: 1.0,
                b: 1.0,
            },
        )
        .unwrap();
        let res = crude_mc_run(&env, 17, &mut stream(0, 0)).unwrap();
        assert_eq!(res.estimate, c);
        assert_eq!(res.counts, vec![17]);
        assert!(crude_mc_run(&env, 0, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn crude_mc_variance_matches_formula() {
        let env = builtin_env("heteroscedastic-ramp", 1).unwrap();
        let n = 50;
        let reps = 10_000;
        let est: Vec<f64> = (0..reps)
            .map(|r| crude_mc_run(&env, n, &mut stream(5, r)).unwrap().estimate)
            .collect();
        let mean = est.iter().sum::<f64>() / reps as f64;
        let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        // ∫(f - μ)² = 1/12 and ∫s² = 1/3
        let expected = (1.0 / 12.0 + 1.0 / 3.0) / n as f64;
        assert!((var / expected - 1.0).abs() < 0.1, "{var} vs {expected}");
    }

    #[test]
    fn mcucb_mean_regret_is_nonnegative() {
        let arms = GaussianArms {
            weights: vec![0.25; 4],
            means: vec![0.0; 4],
            sigmas: vec![0.2, 0.5, 1.0, 2.0],
        };
        let params = McUcbParams::new(1.0, 2.0).unwrap();
        let n = 200;
        let regrets: Vec<f64> = (0..1000)
            .map(|r| {
                let res = mcucb_run(&arms, n, &params, &mut stream(8, r)).unwrap();
                pseudo_regret(&arms.weights, &arms.sigmas, &res.counts_f64(), n)
            })
            .collect();
        let mean = regrets.iter().sum::<f64>() / regrets.len() as f64;
        let sd = (regrets.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
        assert!(mean >= -2.0 * sd / (1000f64).sqrt());
        assert!(regrets.iter().all(|&r| r >= -1e-12));
    }

    #[test]
    fn allocator_dispatch() {
        let env = builtin_env("sine", 1).unwrap();
        let part = Partition::hypercubic(1, 4).unwrap();
        let src = StratifiedEnv::new(&env, &part).unwrap();
        let sigmas = vec![1.0; 4];
        for alloc in [
            Allocator::McUcb(McUcbParams::new(1.0, 1.0).unwrap()),
            Allocator::Uniform,
            Allocator::Oracle { sigmas },
        ] {
            let res = alloc.run(&src, 40, &mut stream(1, 1)).unwrap();
            assert_eq!(res.counts.iter().sum::<usize>(), 40, "{}", alloc.name());
        }
        let _ = Stratum::new(vec![0.0], vec![1.0]).unwrap();
    }
}
