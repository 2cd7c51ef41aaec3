//! Noisy evaluation model `X = f(x) + s(x)·ε` on the unit cube and a catalog
//! of synthetic environments with known ground truth.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A point of `[0,1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        for (index, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfDomain { index, value });
            }
        }
        if coords.is_empty() {
            return Err(Error::InvalidParameter("a point needs at least one coordinate".into()));
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Zero-mean, unit-variance noise laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseFamily {
    /// Standard normal.
    GaussianUnit,
    /// Uniform on `[-√3, √3]`.
    BoundedUniform,
    /// `(B - p) / √(p(1-p))` with `B ~ Bernoulli(p)`.
    BernoulliResidual { p: f64 },
}

/// Noise law plus its declared sub-Gaussian scale `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    family: NoiseFamily,
    b: f64,
}

impl NoiseSpec {
    /// Validates that `b` is large enough for the family. Gaussian noise accepts
    /// any `b >= 1`; bounded families need `b` at least [`NoiseSpec::range_bound`].
    pub fn new(family: NoiseFamily, b: f64) -> Result<Self> {
        if let NoiseFamily::BernoulliResidual { p } = family {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "bernoulli residual needs p in (0,1), got {p}"
                )));
            }
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sub-Gaussian scale b must be positive, got {b}"
            )));
        }
        let required = match family {
            NoiseFamily::GaussianUnit => 1.0,
            _ => Self::family_range_bound(family).expect("bounded family"),
        };
        if b < required - 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "b = {b} is below the minimum {required} for {family:?}"
            )));
        }
        Ok(NoiseSpec { family, b })
    }

    pub fn gaussian() -> Self {
        NoiseSpec {
            family: NoiseFamily::GaussianUnit,
            b: 1.0,
        }
    }

    pub fn bounded_uniform() -> Self {
        let family = NoiseFamily::BoundedUniform;
        NoiseSpec {
            family,
            b: Self::family_range_bound(family).unwrap(),
        }
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// For bounded families, `max(sup|ε|, sup|ε² - 1|)`; `None` for Gaussian noise.
    pub fn range_bound(&self) -> Option<f64> {
        Self::family_range_bound(self.family)
    }

    fn family_range_bound(family: NoiseFamily) -> Option<f64> {
        let support: Vec<f64> = match family {
            NoiseFamily::GaussianUnit => return None,
            NoiseFamily::BoundedUniform => vec![-(3f64.sqrt()), 0.0, 3f64.sqrt()],
            NoiseFamily::BernoulliResidual { p } => {
                let scale = (p * (1.0 - p)).sqrt();
                vec![(1.0 - p) / scale, -p / scale]
            }
        };
        Some(
            support
                .iter()
                .map(|e| e.abs().max((e * e - 1.0).abs()))
                .fold(0.0, f64::max),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::GaussianUnit => StandardNormal.sample(rng),
            NoiseFamily::BoundedUniform => {
                let half = 3f64.sqrt();
                rng.gen_range(-half..half)
            }
            NoiseFamily::BernoulliResidual { p } => {
                let bit = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
                (bit - p) / (p * (1.0 - p)).sqrt()
            }
        }
    }
}

/// Regularity and boundedness constants an environment claims to satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    /// Hölder constant `M`.
    pub holder_m: f64,
    /// Hölder exponent in `(0, 1]`.
    pub alpha: f64,
    /// Bound on `|f|` and `s`.
    pub f_max: f64,
    /// Sub-Gaussian scale of the noise.
    pub b: f64,
}

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A noisy function on `[0,1]^d`. Immutable once built.
#[derive(Clone)]
pub struct Environment {
    name: String,
    dim: usize,
    mean_fn: ScalarField,
    std_fn: ScalarField,
    noise: NoiseSpec,
    declared: DeclaredConstants,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise", &self.noise)
            .field("declared", &self.declared)
            .finish()
    }
}

impl Environment {
    /// Builds an environment and checks `s >= 0`, `|f| <= f_max` and
    /// `s <= f_max` on a validation grid.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        mean_fn: ScalarField,
        std_fn: ScalarField,
        noise: NoiseSpec,
        declared: DeclaredConstants,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if !(declared.alpha > 0.0 && declared.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0,1], got {}",
                declared.alpha
            )));
        }
        if declared.holder_m < 0.0 || declared.f_max < 0.0 {
            return Err(Error::InvalidParameter("M and f_max must be nonnegative".into()));
        }
        let env = Environment {
            name: name.into(),
            dim,
            mean_fn,
            std_fn,
            noise,
            declared,
        };
        let resolution = validation_resolution(dim);
        let tol = 1e-12 * (1.0 + declared.f_max);
        for x in grid_points(dim, resolution) {
            let (m, s) = (env.mean_at(&x), env.std_at(&x));
            if !(s >= 0.0) {
                return Err(Error::InvalidParameter(format!("std_fn is negative ({s}) at {x:?}")));
            }
            if m.abs() > declared.f_max + tol || s > declared.f_max + tol {
                return Err(Error::InvalidParameter(format!(
                    "f_max = {} violated at {x:?}: f = {m}, s = {s}",
                    declared.f_max
                )));
            }
        }
        Ok(env)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn declared(&self) -> &DeclaredConstants {
        &self.declared
    }

    pub fn mean_at(&self, x: &[f64]) -> f64 {
        (self.mean_fn)(x)
    }

    pub fn std_at(&self, x: &[f64]) -> f64 {
        (self.std_fn)(x)
    }

    /// One noisy sample `f(x) + s(x)·ε`.
    pub fn evaluate<R: Rng + ?Sized>(&self, x: &Point, rng: &mut R) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        Ok(self.evaluate_at(x.coords(), rng))
    }

    /// Unchecked variant of [`Environment::evaluate`] for hot loops; `x` must
    /// already lie in the cube with the right dimension.
    pub(crate) fn evaluate_at<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let eps = self.noise.sample(rng);
        self.mean_at(x) + self.std_at(x) * eps
    }
}

fn validation_resolution(dim: usize) -> usize {
    match dim {
        1 => 1025,
        2 => 65,
        3 => 17,
        _ => 5,
    }
}

/// Regular grid `{0, 1/(r-1), ..., 1}^d` in row-major order.
pub(crate) fn grid_points(dim: usize, resolution: usize) -> impl Iterator<Item = Vec<f64>> {
    let total = resolution.pow(dim as u32);
    let step = 1.0 / (resolution - 1) as f64;
    (0..total).map(move |mut idx| {
        let mut x = vec![0.0; dim];
        for c in x.iter_mut().rev() {
            *c = (idx % resolution) as f64 * step;
            idx /= resolution;
        }
        x
    })
}

fn mean_coord(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Names accepted by [`builtin_env`].
pub const CATALOG: &[&str] = &[
    "constant-noise(c)",
    "linear",
    "sine",
    "step",
    "noiseless-linear",
    "heteroscedastic-ramp",
];

/// Builds a catalog environment. In dimension `d > 1`, functions of `x` below
/// are applied to the coordinate mean `x̄ = (x_1 + ... + x_d)/d`, which keeps
/// the declared Hölder constants valid (`|x̄ - ȳ| <= ||x - y||₂/√d`).
///
/// | name | f | s | M | α | f_max |
/// |---|---|---|---|---|---|
/// | `constant-noise(c)` | 0 | c | 0 | 1 | c |
/// | `linear` | x̄ | 0 | 1 | 1 | 1 |
/// | `noiseless-linear` | x̄ | 0 | 1 | 1 | 1 |
/// | `sine` | sin(2πx̄)/(2π) | 1 | 1 | 1 | 1 |
/// | `step` | clamp(20(x̄ - ½) + ½, 0, 1) | 0.1 + 0.4 f | 20 | 1 | 1 |
/// | `heteroscedastic-ramp` | x̄ | x̄ | 1 | 1 | 1 |
///
/// All entries use standard Gaussian noise with `b = 1`, except
/// `noiseless-linear`, which has no noise law in effect and declares the
/// bounded-uniform family.
pub fn builtin_env(name: &str, dim: usize) -> Result<Environment> {
    let name = name.trim();
    let unit = |m: f64, f_max: f64| DeclaredConstants {
        holder_m: m,
        alpha: 1.0,
        f_max,
        b: 1.0,
    };
    let (mean_fn, std_fn, noise, declared): (ScalarField, ScalarField, NoiseSpec, DeclaredConstants) = match name {
        "linear" => (
            Arc::new(mean_coord),
            Arc::new(|_: &[f64]| 0.0),
            NoiseSpec::gaussian(),
            unit(1.0, 1.0),
        ),
        "noiseless-linear" => {
            let noise = NoiseSpec::bounded_uniform();
            let declared = DeclaredConstants {
                b: noise.b(),
                ..unit(1.0, 1.0)
            };
            (Arc::new(mean_coord), Arc::new(|_: &[f64]| 0.0), noise, declared)
        }
        "sine" => (
            Arc::new(|x: &[f64]| (2.0 * std::f64::consts::PI * mean_coord(x)).sin() / (2.0 * std::f64::consts::PI)),
            Arc::new(|_: &[f64]| 1.0),
            NoiseSpec::gaussian(),
            unit(1.0, 1.0),
        ),
        "step" => (
            Arc::new(step_mean),
            Arc::new(|x: &[f64]| 0.1 + 0.4 * step_mean(x)),
            NoiseSpec::gaussian(),
            unit(20.0, 1.0),
        ),
        "heteroscedastic-ramp" => (
            Arc::new(mean_coord),
            Arc::new(mean_coord),
            NoiseSpec::gaussian(),
            unit(1.0, 1.0),
        ),
        other => {
            let level = parse_constant_noise(other)?;
            let declared = DeclaredConstants {
                holder_m: 0.0,
                alpha: 1.0,
                f_max: level,
                b: 1.0,
            };
            (
                Arc::new(|_: &[f64]| 0.0),
                Arc::new(move |_: &[f64]| level),
                NoiseSpec::gaussian(),
                declared,
            )
        }
    };
    Environment::new(name, dim, mean_fn, std_fn, noise, declared)
}

fn step_mean(x: &[f64]) -> f64 {
    (20.0 * (mean_coord(x) - 0.5) + 0.5).clamp(0.0, 1.0)
}

fn parse_constant_noise(name: &str) -> Result<f64> {
    let unknown = || Error::UnknownEnvironment(name.to_string());
    if name == "constant-noise" {
        return Ok(1.0);
    }
    let arg = name
        .strip_prefix("constant-noise(")
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or_else(unknown)?;
    let level: f64 = arg.trim().parse().map_err(|_| unknown())?;
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise level must be nonnegative, got {level}"
        )));
    }
    Ok(level)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderReport {
    pub max_ratio: f64,
    pub satisfied: bool,
}

/// Checks the declared `(M, α)` Hölder condition for `f` and `s` over all
/// pairs of a regular grid with `grid_resolution` points per axis.
pub fn verify_holder(env: &Environment, grid_resolution: usize) -> Result<HolderReport> {
    if grid_resolution < 2 {
        return Err(Error::InvalidParameter("grid resolution must be at least 2".into()));
    }
    let DeclaredConstants { holder_m, alpha, .. } = *env.declared();
    let points: Vec<Vec<f64>> = grid_points(env.dim(), grid_resolution).collect();
    let values: Vec<(f64, f64)> = points.iter().map(|x| (env.mean_at(x), env.std_at(x))).collect();
    let mut max_ratio: f64 = 0.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let dist = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale = holder_m * dist.powf(alpha);
            for diff in [(values[i].0 - values[j].0).abs(), (values[i].1 - values[j].1).abs()] {
                let ratio = if diff == 0.0 { 0.0 } else { diff / scale };
                max_ratio = max_ratio.max(ratio);
            }
        }
    }
    Ok(HolderReport {
        max_ratio,
        satisfied: max_ratio <= 1.0 + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn point(x: &[f64]) -> Point {
        Point::new(x.to_vec()).unwrap()
    }

    #[test]
    fn point_rejects_out_of_cube() {
        assert!(matches!(
            Point::new(vec![0.5, 1.5]),
            Err(Error::OutOfDomain { index: 1, .. })
        ));
        assert!(Point::new(vec![]).is_err());
    }

    #[test]
    fn noiseless_linear_is_exact() {
        let env = builtin_env("linear", 1).unwrap();
        let mut rng = stream(1, 0);
        assert_eq!(env.evaluate(&point(&[0.25]), &mut rng).unwrap(), 0.25);
    }

    #[test]
    fn constant_function_returns_constant() {
        let c = 3.5;
        let env = Environment::new(
            "const",
            2,
            Arc::new(move |_: &[f64]| c),
            Arc::new(|_: &[f64]| 0.0),
            NoiseSpec::gaussian(),
            DeclaredConstants {
                holder_m: 0.0,
                alpha: 1.0,
                f_max: c,
                b: 1.0,
            },
        )
        .unwrap();
        let mut rng = stream(2, 0);
        for x in [[0.0, 0.0], [0.3, 0.9], [1.0, 1.0]] {
            assert_eq!(env.evaluate(&point(&x), &mut rng).unwrap(), c);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let env = builtin_env("linear", 2).unwrap();
        let err = env.evaluate(&point(&[0.5]), &mut stream(0, 0)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, got: 1 });
    }

    #[test]
    fn unit_noise_mean_concentrates() {
        let env = builtin_env("constant-noise(1)", 1).unwrap();
        let mut rng = stream(11, 0);
        let x = point(&[0.5]);
        let n = 1_000_000;
        let mean = (0..n).map(|_| env.evaluate(&x, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 0.004, "mean {mean}");
    }

    #[test]
    fn evaluate_is_deterministic_given_stream() {
        let env = builtin_env("heteroscedastic-ramp", 1).unwrap();
        let x = point(&[0.7]);
        let a = env.evaluate(&x, &mut stream(5, 9)).unwrap();
        let b = env.evaluate(&x, &mut stream(5, 9)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn catalog_entries() {
        let lin = builtin_env("linear", 1).unwrap();
        assert_eq!(lin.mean_at(&[0.3]), 0.3);
        assert_eq!(lin.std_at(&[0.3]), 0.0);
        assert_eq!((lin.declared().holder_m, lin.declared().alpha), (1.0, 1.0));

        let cn = builtin_env("constant-noise(1)", 1).unwrap();
        assert_eq!((cn.mean_at(&[0.2]), cn.std_at(&[0.2])), (0.0, 1.0));
        assert_eq!(cn.declared().holder_m, 0.0);

        let ramp = builtin_env("heteroscedastic-ramp", 1).unwrap();
        assert_eq!((ramp.mean_at(&[0.4]), ramp.std_at(&[0.4])), (0.4, 0.4));
        assert_eq!((ramp.declared().holder_m, ramp.declared().alpha), (1.0, 1.0));

        let cn2 = builtin_env("constant-noise(2.5)", 3).unwrap();
        assert_eq!(cn2.std_at(&[0.1, 0.2, 0.3]), 2.5);
        for name in ["sine", "step", "noiseless-linear"] {
            for d in 1..=3 {
                builtin_env(name, d).unwrap();
            }
        }
    }

    #[test]
    fn unknown_names_are_catalog_errors() {
        for bad in ["quadratic", "constant-noise(x)", "constant-noise(1"] {
            assert!(
                matches!(builtin_env(bad, 1), Err(Error::UnknownEnvironment(_))),
                "{bad}"
            );
        }
        assert!(matches!(
            builtin_env("constant-noise(-1)", 1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn f_max_violation_is_rejected() {
        let res = Environment::new(
            "too-big",
            1,
            Arc::new(|x: &[f64]| 3.0 * x[0]),
            Arc::new(|_: &[f64]| 0.0),
            NoiseSpec::gaussian(),
            DeclaredConstants {
                holder_m: 3.0,
                alpha: 1.0,
                f_max: 1.0,
                b: 1.0,
            },
        );
        assert!(res.is_err());
    }

    #[test]
    fn holder_linear_is_tight() {
        let env = builtin_env("linear", 1).unwrap();
        for res in [2, 5, 33] {
            let rep = verify_holder(&env, res).unwrap();
            assert!(rep.satisfied);
            assert!((rep.max_ratio - 1.0).abs() < 1e-12, "{}", rep.max_ratio);
        }
    }

    #[test]
    fn holder_detects_understated_constant() {
        let lin = builtin_env("linear", 1).unwrap();
        let env = Environment::new(
            "linear-half-m",
            1,
            Arc::new(|x: &[f64]| x[0]),
            Arc::new(|_: &[f64]| 0.0),
            NoiseSpec::gaussian(),
            DeclaredConstants {
                holder_m: 0.5,
                ..*lin.declared()
            },
        )
        .unwrap();
        let rep = verify_holder(&env, 17).unwrap();
        assert!(!rep.satisfied);
        assert!((rep.max_ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn holder_sine_and_catalog() {
        for name in [
            "sine",
            "step",
            "heteroscedastic-ramp",
            "constant-noise(2)",
            "noiseless-linear",
        ] {
            for d in 1..=2 {
                let env = builtin_env(name, d).unwrap();
                let res = if d == 1 { 257 } else { 17 };
                let rep = verify_holder(&env, res).unwrap();
                assert!(rep.satisfied, "{name} d={d}: {}", rep.max_ratio);
            }
        }
        assert!(verify_holder(&builtin_env("sine", 1).unwrap(), 1).is_err());
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec::new(NoiseFamily::GaussianUnit, 1.0).is_ok());
        assert!(NoiseSpec::new(NoiseFamily::GaussianUnit, 0.5).is_err());
        assert!(NoiseSpec::new(NoiseFamily::BoundedUniform, 1.0).is_err());
        assert!(NoiseSpec::new(NoiseFamily::BoundedUniform, 2.0).is_ok());
        assert!(NoiseSpec::new(NoiseFamily::BernoulliResidual { p: 0.0 }, 5.0).is_err());
        // p = 0.2: support {2, -0.5}, so the bound is max(2, 3) = 3
        let fam = NoiseFamily::BernoulliResidual { p: 0.2 };
        assert!(NoiseSpec::new(fam, 2.9).is_err());
        assert!(NoiseSpec::new(fam, 3.0).is_ok());
    }

    fn moments(noise: &NoiseSpec, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = stream(seed, 0);
        let xs: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var)
    }

    #[test]
    fn noise_families_have_unit_moments() {
        let n = 100_000;
        let fams = [
            NoiseSpec::gaussian(),
            NoiseSpec::bounded_uniform(),
            NoiseSpec::new(NoiseFamily::BernoulliResidual { p: 0.3 }, 10.0).unwrap(),
        ];
        for (i, noise) in fams.iter().enumerate() {
            let (mean, var) = moments(noise, n, 100 + i as u64);
            assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "{noise:?} mean {mean}");
            assert!(
                (var - 1.0).abs() <= 5.0 * (2.0 / n as f64).sqrt(),
                "{noise:?} var {var}"
            );
        }
    }

    #[test]
    fn builtin_envs_match_their_moments() {
        let n = 100_000;
        let x = [0.6];
        for (i, name) in [
            "constant-noise(1)",
            "linear",
            "sine",
            "step",
            "noiseless-linear",
            "heteroscedastic-ramp",
        ]
        .iter()
        .enumerate()
        {
            let env = builtin_env(name, 1).unwrap();
            let (f, s) = (env.mean_at(&x), env.std_at(&x));
            let mut rng = stream(200 + i as u64, 0);
            let xs: Vec<f64> = (0..n).map(|_| env.evaluate_at(&x, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(
                (mean - f).abs() <= 4.0 * s / (n as f64).sqrt() + 1e-12,
                "{name}: {mean} vs {f}"
            );
            assert!(
                (var - s * s).abs() <= 5.0 * s * s * (2.0 / n as f64).sqrt() + 1e-12,
                "{name}: {var}"
            );
        }
    }
}
