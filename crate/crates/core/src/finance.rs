//! Arithmetic-average Asian call under Black-Scholes, stratified on the
//! quantiles of the terminal Brownian value `W_T` with Brownian-bridge
//! completion of the path.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::normal::inverse_normal_cdf;
use crate::rng::stream;
use crate::sampler::StratumSampler;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsianOptionSpec {
    /// Initial price `S₀`.
    pub s0_price: f64,
    /// Risk-free rate `r`.
    pub rate: f64,
    /// Volatility.
    pub vol: f64,
    /// Maturity `T`.
    pub maturity: f64,
    /// Number of equidistant monitoring dates.
    pub steps: usize,
    /// Strike `C`.
    pub strike: f64,
}

impl Default for AsianOptionSpec {
    /// `S₀ = 100, r = 0.05, vol = 0.30, T = 1`, 16 dates, strike 120.
    fn default() -> Self {
        AsianOptionSpec {
            s0_price: 100.0,
            rate: 0.05,
            vol: 0.30,
            maturity: 1.0,
            steps: 16,
            strike: 120.0,
        }
    }
}

impl AsianOptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0_price > 0.0) || !(self.vol >= 0.0) || !(self.maturity > 0.0) || self.steps == 0 {
            return Err(Error::InvalidParameter(format!("invalid option spec {self:?}")));
        }
        if !self.rate.is_finite() || !self.strike.is_finite() {
            return Err(Error::InvalidParameter("rate and strike must be finite".into()));
        }
        Ok(())
    }

    pub fn with_strike(self, strike: f64) -> Self {
        AsianOptionSpec { strike, ..self }
    }

    fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }
}

/// Probability band `[p_low, p_high)` of the law of `W_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileStratum {
    p_low: f64,
    p_high: f64,
}

impl QuantileStratum {
    pub fn new(p_low: f64, p_high: f64) -> Result<Self> {
        if !(0.0 <= p_low && p_low < p_high && p_high <= 1.0) {
            return Err(Error::InvalidParameter(format!("need 0 <= {p_low} < {p_high} <= 1")));
        }
        Ok(QuantileStratum { p_low, p_high })
    }

    /// `K` equal-probability bands, `((k-1)/K, k/K)`.
    pub fn equal_bands(k: usize) -> Result<Vec<Self>> {
        if k == 0 {
            return Err(Error::InvalidParameter("need at least one stratum".into()));
        }
        Ok((0..k)
            .map(|i| QuantileStratum {
                p_low: i as f64 / k as f64,
                p_high: (i + 1) as f64 / k as f64,
            })
            .collect())
    }

    pub fn p_low(&self) -> f64 {
        self.p_low
    }

    pub fn p_high(&self) -> f64 {
        self.p_high
    }

    pub fn weight(&self) -> f64 {
        self.p_high - self.p_low
    }
}

/// Smallest and largest probabilities fed to the quantile function.
const P_MIN: f64 = f64::MIN_POSITIVE;
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// `√T Φ^{-1}(u)` with `u` uniform on the band.
pub fn sample_wt_in_stratum<R: Rng + ?Sized>(stratum: &QuantileStratum, maturity: f64, rng: &mut R) -> f64 {
    let u = stratum.p_low + (stratum.p_high - stratum.p_low) * rng.gen::<f64>();
    maturity.sqrt() * inverse_normal_cdf(u.clamp(P_MIN, P_MAX))
}

/// Brownian values at `t_i = iT/steps`, `i = 1..=steps`, conditioned on
/// `W_T = w_t`, built forward one bridge step at a time.
pub fn brownian_bridge_path<R: Rng + ?Sized>(w_t: f64, spec: &AsianOptionSpec, rng: &mut R) -> Vec<f64> {
    let mut path = Vec::with_capacity(spec.steps);
    fill_bridge(w_t, spec, rng, &mut path);
    path
}

fn fill_bridge<R: Rng + ?Sized>(w_t: f64, spec: &AsianOptionSpec, rng: &mut R, path: &mut Vec<f64>) {
    path.clear();
    let dt = spec.dt();
    let mut prev = 0.0;
    for i in 1..spec.steps {
        let remaining = spec.maturity - (i - 1) as f64 * dt;
        let after = spec.maturity - i as f64 * dt;
        let mean = prev + dt * (w_t - prev) / remaining;
        let sd = (dt * after / remaining).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        prev = mean + sd * z;
        path.push(prev);
    }
    path.push(w_t);
}

/// Discounted payoff `e^{-rT} max((T/steps) Σ_i S(t_i) - C·T, 0)` with
/// `S(t) = S₀ exp((r - vol²/2)t + vol·W_t)`: the time average of the price is
/// a right-endpoint Riemann sum over the monitoring dates.
pub fn asian_payoff(path: &[f64], spec: &AsianOptionSpec) -> f64 {
    debug_assert_eq!(path.len(), spec.steps);
    let dt = spec.dt();
    let drift = spec.rate - 0.5 * spec.vol * spec.vol;
    let integral: f64 = path
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let t = (i + 1) as f64 * dt;
            spec.s0_price * (drift * t + spec.vol * w).exp()
        })
        .sum::<f64>()
        * dt;
    (-spec.rate * spec.maturity).exp() * (integral - spec.strike * spec.maturity).max(0.0)
}

/// The option as a stratified problem: `K` equal-probability bands of `W_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsianEnvironment {
    spec: AsianOptionSpec,
    strata: Vec<QuantileStratum>,
}

impl AsianEnvironment {
    pub fn new(spec: AsianOptionSpec, k: usize) -> Result<Self> {
        spec.validate()?;
        Ok(AsianEnvironment {
            spec,
            strata: QuantileStratum::equal_bands(k)?,
        })
    }

    pub fn spec(&self) -> &AsianOptionSpec {
        &self.spec
    }

    pub fn strata(&self) -> &[QuantileStratum] {
        &self.strata
    }
}

impl StratumSampler for AsianEnvironment {
    fn num_strata(&self) -> usize {
        self.strata.len()
    }

    fn weight(&self, k: usize) -> f64 {
        self.strata[k].weight()
    }

    fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        let w_t = sample_wt_in_stratum(&self.strata[k], self.spec.maturity, rng);
        let mut path = Vec::with_capacity(self.spec.steps);
        fill_bridge(w_t, &self.spec, rng, &mut path);
        asian_payoff(&path, &self.spec)
    }
}

/// Crude reference price for the default spec: `10^6` paths, seed [`REFERENCE_SEED`].
pub const REFERENCE_PRICE: PriceEstimate = PriceEstimate {
    price: 2.1639243768223984,
    std_error: 0.006796791479280615,
};
pub const REFERENCE_SEED: u64 = 2012;
pub const REFERENCE_PATHS: usize = 1_000_000;

/// Price estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEstimate {
    pub price: f64,
    pub std_error: f64,
}

/// Stratified reference price: `samples_per_stratum` paths in each of `k`
/// equal-probability bands, stratum `j` drawn from `stream(seed, j)`.
/// With `k = 1` this is crude Monte-Carlo.
pub fn reference_price(
    spec: &AsianOptionSpec,
    k: usize,
    samples_per_stratum: usize,
    seed: u64,
) -> Result<PriceEstimate> {
    if samples_per_stratum < 2 {
        return Err(Error::InvalidParameter("need at least 2 samples per stratum".into()));
    }
    let env = AsianEnvironment::new(*spec, k)?;
    let per_stratum: Vec<(f64, f64)> = (0..k)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, j as u64);
            let mut acc = crate::allocate::Accumulator::new();
            for _ in 0..samples_per_stratum {
                acc.push(env.sample(j, &mut rng));
            }
            let var = acc.std_dev(crate::allocate::VarianceForm::Unbiased).unwrap().powi(2);
            (acc.mean().unwrap(), var)
        })
        .collect();
    let w = 1.0 / k as f64;
    let price = per_stratum.iter().map(|(m, _)| w * m).sum();
    let var: f64 = per_stratum
        .iter()
        .map(|(_, v)| w * w * v / samples_per_stratum as f64)
        .sum();
    Ok(PriceEstimate {
        price,
        std_error: var.sqrt(),
    })
}
