//! Ground-truth stratum statistics, oracle allocation, pseudo-risk, regret and
//! partition quality, plus closed-form bound evaluators.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::Environment;
use crate::partition::{integer_root, Partition, Stratum};

/// True within-stratum mean and standard deviation of the noisy samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratumTruth {
    pub mu: f64,
    pub sigma: f64,
}

/// Per-stratum sample counts; fractional for oracle targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationVector(pub Vec<f64>);

impl AllocationVector {
    pub fn from_counts(counts: &[usize]) -> Self {
        AllocationVector(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Tensor-grid midpoint rule on a global grid of `points_per_axis` cells per
/// axis over `[0,1]^d`.
///
/// A stratum is integrated on the cell midpoints of the global grid it
/// contains, so when stratum faces sit on grid lines (hyper-cubic partitions
/// with `l` dividing the resolution, and their dyadic refinements) the
/// statistics of a split stratum are exact mixtures of its halves' statistics.
/// Strata narrower than a grid cell, or not aligned with it, get their own
/// evenly spaced midpoints at the same density (at least two per axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    pub points_per_axis: usize,
}

/// Grids with more nodes than this are refused.
const MAX_QUADRATURE_NODES: usize = 1 << 26;

impl QuadratureSpec {
    pub fn new(points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(Error::InvalidParameter(
                "quadrature needs at least 2 points per axis".into(),
            ));
        }
        Ok(QuadratureSpec { points_per_axis })
    }

    /// 256 nodes per axis for d = 1, 64 for d = 2, 16 for d = 3. Higher
    /// dimensions are refused; use [`monte_carlo_stratum_stats`] there.
    pub fn for_dim(dim: usize) -> Result<Self> {
        let points_per_axis = match dim {
            1 => 256,
            2 => 64,
            3 => 16,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "no default quadrature in dimension {dim}; use the Monte-Carlo fallback"
                )))
            }
        };
        Ok(QuadratureSpec { points_per_axis })
    }

    /// Node count along one stratum axis `[lo, hi)`.
    fn axis_nodes(&self, lo: f64, hi: f64) -> usize {
        let g = self.points_per_axis as f64;
        let cells = (hi - lo) * g;
        let rounded = cells.round();
        let aligned = (cells - rounded).abs() < 1e-9 && (lo * g - (lo * g).round()).abs() < 1e-9;
        if aligned && rounded >= 1.0 {
            rounded as usize
        } else {
            (cells.ceil() as usize).max(2)
        }
    }
}

/// Midpoint nodes of a box.
struct MidpointGrid {
    counts: Vec<usize>,
    starts: Vec<f64>,
    steps: Vec<f64>,
    total: usize,
}

impl MidpointGrid {
    fn new(stratum: &Stratum, quad: QuadratureSpec) -> Result<Self> {
        let counts: Vec<usize> = stratum
            .lower()
            .iter()
            .zip(stratum.upper())
            .map(|(&lo, &hi)| quad.axis_nodes(lo, hi))
            .collect();
        let total = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .filter(|&t| t <= MAX_QUADRATURE_NODES)
            .ok_or_else(|| Error::InvalidParameter(format!("quadrature grid {counts:?} has too many nodes")))?;
        let steps: Vec<f64> = stratum
            .lower()
            .iter()
            .zip(stratum.upper())
            .zip(&counts)
            .map(|((lo, hi), &c)| (hi - lo) / c as f64)
            .collect();
        let starts = stratum.lower().iter().zip(&steps).map(|(lo, h)| lo + 0.5 * h).collect();
        Ok(MidpointGrid {
            counts,
            starts,
            steps,
            total,
        })
    }

    /// Average of `g` over the nodes.
    fn average(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        let dim = self.counts.len();
        let mut x = vec![0.0; dim];
        let mut sum = 0.0;
        for mut idx in 0..self.total {
            for axis in (0..dim).rev() {
                let j = idx % self.counts[axis];
                idx /= self.counts[axis];
                x[axis] = self.starts[axis] + j as f64 * self.steps[axis];
            }
            sum += g(&x);
        }
        sum / self.total as f64
    }
}

fn midpoint_average(stratum: &Stratum, quad: QuadratureSpec, g: impl FnMut(&[f64]) -> f64) -> Result<f64> {
    Ok(MidpointGrid::new(stratum, quad)?.average(g))
}

/// `μ_k = (1/w_k)∫f` and `σ_k² = (1/w_k)∫(f - μ_k)² + (1/w_k)∫s²` on one stratum.
pub fn true_stratum_stats(env: &Environment, stratum: &Stratum, quad: QuadratureSpec) -> Result<StratumTruth> {
    if stratum.dim() != env.dim() {
        return Err(Error::DimensionMismatch {
            expected: env.dim(),
            got: stratum.dim(),
        });
    }
    let grid = MidpointGrid::new(stratum, quad)?;
    let mu = grid.average(|x| env.mean_at(x));
    // corrected two-pass: the residual mean cancels the rounding in `mu`
    let mut resid_sum = 0.0;
    let second = grid.average(|x| {
        let (d, s) = (env.mean_at(x) - mu, env.std_at(x));
        resid_sum += d;
        d * d + s * s
    });
    let resid = resid_sum / grid.total as f64;
    let var = second - resid * resid;
    Ok(StratumTruth {
        mu,
        sigma: var.max(0.0).sqrt(),
    })
}

/// Large-sample Monte-Carlo estimate of the stratum truth, for dimensions
/// where the tensor grid is too expensive. Uses `f` and `s` directly with
/// uniformly drawn points and a fixed seed.
pub fn monte_carlo_stratum_stats(
    env: &Environment,
    stratum: &Stratum,
    samples: usize,
    seed: u64,
) -> Result<StratumTruth> {
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least 2 samples".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut x = vec![0.0; stratum.dim()];
    let (mut f_sum, mut f_sq, mut s_sq) = (0.0, 0.0, 0.0);
    for _ in 0..samples {
        stratum.sample_into(&mut rng, &mut x);
        let (f, s) = (env.mean_at(&x), env.std_at(&x));
        f_sum += f;
        f_sq += f * f;
        s_sq += s * s;
    }
    let m = samples as f64;
    let mu = f_sum / m;
    let var = (f_sq / m - mu * mu).max(0.0) + s_sq / m;
    Ok(StratumTruth { mu, sigma: var.sqrt() })
}

pub fn partition_truth(env: &Environment, partition: &Partition, quad: QuadratureSpec) -> Result<Vec<StratumTruth>> {
    partition
        .strata()
        .iter()
        .map(|s| true_stratum_stats(env, s, quad))
        .collect()
}

/// `Σ_N = Σ_k w_k σ_k`.
pub fn sigma_of_partition(env: &Environment, partition: &Partition, quad: QuadratureSpec) -> Result<f64> {
    let truth = partition_truth(env, partition, quad)?;
    Ok(partition.weights().iter().zip(&truth).map(|(w, t)| w * t.sigma).sum())
}

/// `∫ s` over the whole cube, midpoint rule with `quad` nodes per axis.
pub fn integral_of_std(env: &Environment, quad: QuadratureSpec) -> Result<f64> {
    let cube = Stratum::new(vec![0.0; env.dim()], vec![1.0; env.dim()])?;
    midpoint_average(&cube, quad, |x| env.std_at(x))
}

/// True integral `μ = ∫ f` over the cube.
pub fn integral_of_mean(env: &Environment, quad: QuadratureSpec) -> Result<f64> {
    let cube = Stratum::new(vec![0.0; env.dim()], vec![1.0; env.dim()])?;
    midpoint_average(&cube, quad, |x| env.mean_at(x))
}

fn check_lengths(weights: &[f64], sigmas: &[f64]) -> Result<()> {
    if weights.len() != sigmas.len() || weights.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "weights ({}) and sigmas ({}) must have the same nonzero length",
            weights.len(),
            sigmas.len()
        )));
    }
    Ok(())
}

/// `Σ w_k σ_k`.
pub fn weighted_sigma(weights: &[f64], sigmas: &[f64]) -> f64 {
    weights.iter().zip(sigmas).map(|(w, s)| w * s).sum()
}

/// Oracle allocation `T*_k = n w_k σ_k / Σ_i w_i σ_i`, kept fractional.
/// Fails with [`Error::DegenerateProblem`] when every `w_k σ_k` is zero.
pub fn optimal_allocation(weights: &[f64], sigmas: &[f64], n: usize) -> Result<AllocationVector> {
    check_lengths(weights, sigmas)?;
    let total = weighted_sigma(weights, sigmas);
    if !(total > 0.0) {
        return Err(Error::DegenerateProblem);
    }
    Ok(AllocationVector(
        weights
            .iter()
            .zip(sigmas)
            .map(|(w, s)| n as f64 * w * s / total)
            .collect(),
    ))
}

/// `Σ_k w_k² σ_k² / T_k`. Strata with `w_k σ_k = 0` contribute nothing; an
/// empty stratum with positive variance makes the risk `+∞`.
pub fn pseudo_risk(weights: &[f64], sigmas: &[f64], counts: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), counts.len());
    weights
        .iter()
        .zip(sigmas)
        .zip(counts)
        .map(|((w, s), &t)| {
            let num = w * w * s * s;
            if num == 0.0 {
                0.0
            } else if t <= 0.0 {
                f64::INFINITY
            } else {
                num / t
            }
        })
        .sum()
}

/// Pseudo-risk minus the oracle pseudo-risk `(Σ w_k σ_k)² / n`.
pub fn pseudo_regret(weights: &[f64], sigmas: &[f64], counts: &[f64], n: usize) -> f64 {
    let sigma = weighted_sigma(weights, sigmas);
    pseudo_risk(weights, sigmas, counts) - sigma * sigma / n as f64
}

/// `(Σ_N² - (∫s)²) / n`: the gap between the oracle variance on this
/// partition and the infimum over all partitions.
pub fn quality(env: &Environment, partition: &Partition, n: usize, quad: QuadratureSpec) -> Result<f64> {
    let sigma = sigma_of_partition(env, partition, quad)?;
    let s_int = integral_of_std(env, quad)?;
    Ok((sigma * sigma - s_int * s_int) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderBounds {
    /// Upper bound on the partition quality `Q_{n,N_K}`.
    pub quality: f64,
    /// Upper bound on `Σ_{N_K} - ∫s`.
    pub sigma_gap: f64,
}

/// Quality and Σ-gap bounds for `K = l^d` hyper-cubic strata of
/// `(M, α)`-Hölder `f` and `s`.
pub fn holder_quality_bound(m: f64, alpha: f64, dim: usize, k: usize, sigma_n1: f64, n: usize) -> Result<HolderBounds> {
    if integer_root(k, dim).is_none() {
        return Err(Error::Precondition(format!("K = {k} is not a perfect {dim}-th power")));
    }
    let sigma_gap = (2.0 * dim as f64).sqrt() * m * (k as f64).powf(-alpha / dim as f64);
    Ok(HolderBounds {
        quality: 2.0 * sigma_n1 * sigma_gap / n as f64,
        sigma_gap,
    })
}

/// Upper bound on MC-UCB's expected pseudo-regret on `K` strata, valid for
/// `n >= 4K`.
pub fn mcucb_regret_bound(sigma_n: f64, b: f64, f_max: f64, k: usize, n: usize) -> Result<f64> {
    if n < 4 * k {
        return Err(Error::Precondition(format!(
            "the bound needs n >= 4K, got n = {n}, K = {k}"
        )));
    }
    let (kf, nf) = (k as f64, n as f64);
    let lead = 24.0
        * 2f64.sqrt()
        * sigma_n
        * (1.0 + 3.0 * b + 4.0 * f_max * f_max).sqrt()
        * ((f_max + 4.0) / 4.0).cbrt()
        * kf.cbrt()
        * nf.powf(-4.0 / 3.0)
        * (nf * kf).ln().sqrt();
    Ok(lead + 14.0 * kf * sigma_n * sigma_n / (nf * nf))
}

/// Minimax lower-bound shape `C K^{1/3} n^{-4/3}`; the numerical constant is
/// not known in closed form and is supplied by the caller.
pub fn minimax_regret_shape(constant: f64, k: usize, n: usize) -> f64 {
    constant * (k as f64).cbrt() * (n as f64).powf(-4.0 / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_env, DeclaredConstants, NoiseSpec};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn quad(p: usize) -> QuadratureSpec {
        QuadratureSpec::new(p).unwrap()
    }

    #[test]
    fn constant_function_has_zero_sigma() {
        let env = Environment::new(
            "c",
            2,
            Arc::new(|_: &[f64]| 0.7),
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
        let p = Partition::hypercubic(2, 3).unwrap();
        for s in p.strata() {
            let t = true_stratum_stats(&env, s, quad(8)).unwrap();
            assert!((t.mu - 0.7).abs() < 1e-15);
            assert_eq!(t.sigma, 0.0);
        }
    }

    #[test]
    fn uniform_variance_on_unit_interval() {
        let env = builtin_env("linear", 1).unwrap();
        let cube = Stratum::new(vec![0.0], vec![1.0]).unwrap();
        // midpoint rule on x² is exact up to h²/12: check refinement converges
        let mut prev = f64::INFINITY;
        for p in [16, 64, 256, 4096] {
            let t = true_stratum_stats(&env, &cube, quad(p)).unwrap();
            let err = (t.sigma - 1.0 / 12f64.sqrt()).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-7, "{prev}");
    }

    #[test]
    fn pure_unit_noise() {
        let env = builtin_env("constant-noise(1)", 1).unwrap();
        let cube = Stratum::new(vec![0.0], vec![1.0]).unwrap();
        let t = true_stratum_stats(&env, &cube, quad(32)).unwrap();
        assert_eq!((t.mu, t.sigma), (0.0, 1.0));
    }

    #[test]
    fn sigma_of_constant_noise_partition() {
        let env = builtin_env("constant-noise(2)", 2).unwrap();
        for side in [1, 2, 5] {
            let p = Partition::hypercubic(2, side).unwrap();
            assert!((sigma_of_partition(&env, &p, quad(8)).unwrap() - 2.0).abs() < 1e-12);
            assert!(quality(&env, &p, 100, quad(8)).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_of_linear_partition() {
        let env = builtin_env("linear", 1).unwrap();
        for k in [1usize, 2, 4, 8] {
            let p = Partition::hypercubic(1, k).unwrap();
            let sigma = sigma_of_partition(&env, &p, quad(4096)).unwrap();
            let expected = 1.0 / (12f64.sqrt() * k as f64);
            assert!((sigma - expected).abs() < 1e-7, "K={k}: {sigma} vs {expected}");
            let q = quality(&env, &p, 50, quad(4096)).unwrap();
            assert!((q - 1.0 / (12.0 * (k * k) as f64) / 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quadrature_defaults() {
        assert_eq!(QuadratureSpec::for_dim(1).unwrap().points_per_axis, 256);
        assert_eq!(QuadratureSpec::for_dim(2).unwrap().points_per_axis, 64);
        assert_eq!(QuadratureSpec::for_dim(3).unwrap().points_per_axis, 16);
        assert!(QuadratureSpec::for_dim(4).is_err());
        assert!(QuadratureSpec::new(1).is_err());
    }

    #[test]
    fn monte_carlo_fallback_agrees_with_quadrature() {
        let env = builtin_env("heteroscedastic-ramp", 2).unwrap();
        let s = Stratum::new(vec![0.0, 0.5], vec![0.5, 1.0]).unwrap();
        let q = true_stratum_stats(&env, &s, quad(64)).unwrap();
        let m = monte_carlo_stratum_stats(&env, &s, 1_000_000, 17).unwrap();
        assert!((q.mu - m.mu).abs() < 1e-3);
        assert!((q.sigma - m.sigma).abs() < 1e-3);
    }

    #[test]
    fn oracle_allocation_examples() {
        assert_eq!(
            optimal_allocation(&[0.5, 0.5], &[1.0, 1.0], 100).unwrap().0,
            vec![50.0, 50.0]
        );
        assert_eq!(
            optimal_allocation(&[0.5, 0.5], &[3.0, 1.0], 100).unwrap().0,
            vec![75.0, 25.0]
        );
        assert_eq!(
            optimal_allocation(&[0.5, 0.5], &[0.0, 0.0], 10),
            Err(Error::DegenerateProblem)
        );
        assert!(optimal_allocation(&[1.0], &[1.0, 2.0], 10).is_err());
    }

    #[test]
    fn pseudo_risk_examples() {
        assert!((pseudo_risk(&[1.0], &[2.0], &[40.0]) - 0.1).abs() < 1e-15);
        assert!((pseudo_risk(&[0.5, 0.5], &[3.0, 1.0], &[75.0, 25.0]) - 0.04).abs() < 1e-15);
        assert_eq!(pseudo_risk(&[0.5, 0.5], &[1.0, 0.0], &[10.0, 0.0]), 0.025);
        assert_eq!(pseudo_risk(&[0.5, 0.5], &[1.0, 1.0], &[10.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn pseudo_regret_examples() {
        let (w, s) = ([0.5, 0.5], [3.0, 1.0]);
        assert!(pseudo_regret(&w, &s, &[75.0, 25.0], 100).abs() < 1e-12);
        assert!((pseudo_regret(&w, &s, &[50.0, 50.0], 100) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn holder_bound_examples() {
        let b = holder_quality_bound(0.0, 1.0, 1, 4, 1.0, 10).unwrap();
        assert_eq!((b.quality, b.sigma_gap), (0.0, 0.0));
        let b = holder_quality_bound(1.0, 1.0, 1, 4, 1.0, 10).unwrap();
        assert!((b.sigma_gap - 0.35355339059327373).abs() < 1e-12);
        assert!((b.quality - 2.0 * b.sigma_gap / 10.0).abs() < 1e-15);
        assert!(holder_quality_bound(1.0, 1.0, 2, 8, 1.0, 10).is_err());
    }

    #[test]
    fn ramp_gap_respects_holder_bound() {
        let env = builtin_env("heteroscedastic-ramp", 1).unwrap();
        let s_int = integral_of_std(&env, quad(4096)).unwrap();
        for k in [1usize, 2, 4, 8, 16] {
            let p = Partition::hypercubic(1, k).unwrap();
            let gap = sigma_of_partition(&env, &p, quad(1024)).unwrap() - s_int;
            let bound = holder_quality_bound(1.0, 1.0, 1, k, 1.0, 1).unwrap().sigma_gap;
            assert!(gap >= -1e-9 && gap <= bound, "K={k}: {gap} vs {bound}");
        }
    }

    #[test]
    fn regret_bound_values() {
        let v = mcucb_regret_bound(1.0, 1.0, 1.0, 1, 256).unwrap();
        assert!((v - 0.15002530306584744).abs() < 1e-12, "{v}");
        assert!(mcucb_regret_bound(1.0, 1.0, 1.0, 4, 15).is_err());
        let n = 1_000_000_000;
        let ratio =
            mcucb_regret_bound(1.0, 1.0, 1.0, 64, n).unwrap() / mcucb_regret_bound(1.0, 1.0, 1.0, 8, n).unwrap();
        // the √log(nK) factor moves the ratio slightly above 2
        let log_ratio = ((n as f64 * 64.0).ln() / (n as f64 * 8.0).ln()).sqrt();
        assert!((ratio - 2.0 * log_ratio).abs() < 1e-6, "{ratio}");
        let mut prev = 0.0;
        for f_max in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let v = mcucb_regret_bound(1.0, 1.0, f_max, 4, 1000).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    /// Enumerates every integer allocation of `n` over `k` strata with all
    /// counts >= 1.
    fn integer_allocations(n: usize, k: usize) -> Vec<Vec<f64>> {
        if k == 1 {
            return vec![vec![n as f64]];
        }
        let mut out = Vec::new();
        for first in 1..=(n - (k - 1)) {
            for mut rest in integer_allocations(n - first, k - 1) {
                rest.insert(0, first as f64);
                out.push(rest);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn oracle_lower_bounds_integer_allocations(
            raw_w in prop::collection::vec(0.05f64..1.0, 1..=4),
            raw_s in prop::collection::vec(0.01f64..3.0, 4),
            extra in 0usize..26,
        ) {
            let k = raw_w.len();
            let total: f64 = raw_w.iter().sum();
            let w: Vec<f64> = raw_w.iter().map(|x| x / total).collect();
            let s = &raw_s[..k];
            let n = k + extra.min(30 - k);
            let oracle = weighted_sigma(&w, s).powi(2) / n as f64;
            for alloc in integer_allocations(n, k) {
                prop_assert!(pseudo_risk(&w, s, &alloc) >= oracle * (1.0 - 1e-12));
            }
            let opt = optimal_allocation(&w, s, n).unwrap();
            prop_assert!((opt.total() - n as f64).abs() < 1e-9);
            let r = pseudo_risk(&w, s, opt.as_slice());
            prop_assert!((r - oracle).abs() <= 1e-12 * oracle);
        }

        #[test]
        fn pseudo_regret_is_nonnegative(
            w in prop::collection::vec(0.01f64..1.0, 1..8),
            s in prop::collection::vec(0.0f64..5.0, 8),
            c in prop::collection::vec(1usize..200, 8),
        ) {
            let k = w.len();
            let counts: Vec<f64> = c[..k].iter().map(|&x| x as f64).collect();
            let n = c[..k].iter().sum();
            prop_assert!(pseudo_regret(&w, &s[..k], &counts, n) >= -1e-12);
        }

        #[test]
        fn refinement_never_increases_sigma(
            env_idx in 0usize..6,
            dim in 1usize..=2,
            splits in prop::collection::vec((0usize..64, 0usize..2), 1..8),
        ) {
            let names = ["constant-noise(1)", "linear", "sine", "step", "noiseless-linear", "heteroscedastic-ramp"];
            let env = builtin_env(names[env_idx], dim).unwrap();
            let q = quad(if dim == 1 { 1 << 14 } else { 256 });
            let s_int = integral_of_std(&env, q).unwrap();
            let mut p = Partition::hypercubic(dim, 1).unwrap();
            let mut sigma = sigma_of_partition(&env, &p, q).unwrap();
            for (k, axis) in splits {
                p = p.refine(k % p.len(), axis % dim).unwrap();
                let next = sigma_of_partition(&env, &p, q).unwrap();
                prop_assert!(next <= sigma + 1e-9);
                prop_assert!(next >= s_int - 1e-6);
                sigma = next;
            }
        }
    }
}
