//! Box partitions of `[0,1]^d`, chiefly the hyper-cubic family `N_K` of
//! `K = l^d` equal cubes of side `1/l`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Point;

/// Largest number of strata a partition may hold.
pub const MAX_STRATA: usize = 1 << 24;

/// Axis-aligned box `[lower, upper)` with its Lebesgue measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    lower: Vec<f64>,
    upper: Vec<f64>,
    weight: f64,
}

impl Stratum {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidParameter(
                "stratum bounds must share a positive dimension".into(),
            ));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(0.0 <= *lo && lo < hi && *hi <= 1.0) {
                return Err(Error::InvalidParameter(format!("axis {i}: need 0 <= {lo} < {hi} <= 1")));
            }
        }
        let weight = lower.iter().zip(&upper).map(|(lo, hi)| hi - lo).product();
        Ok(Stratum { lower, upper, weight })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Euclidean length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// Half-open membership; the face `x_i = 1` counts as inside.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&xi, (&lo, &hi))| lo <= xi && (xi < hi || (hi == 1.0 && xi == 1.0)))
    }

    /// Uniform draw on the box, written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for ((o, &lo), &hi) in out.iter_mut().zip(&self.lower).zip(&self.upper) {
            *o = loop {
                let v = lo + (hi - lo) * rng.gen::<f64>();
                // rounding can land exactly on an open upper face
                if v < hi {
                    break v;
                }
            };
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut coords = vec![0.0; self.dim()];
        self.sample_into(rng, &mut coords);
        Point::new(coords).expect("box lies inside the unit cube")
    }

    fn halves(&self, axis: usize) -> (Stratum, Stratum) {
        let mid = 0.5 * (self.lower[axis] + self.upper[axis]);
        let mut low = self.clone();
        let mut high = self.clone();
        low.upper[axis] = mid;
        high.lower[axis] = mid;
        low.weight = self.weight * 0.5;
        high.weight = self.weight * 0.5;
        (low, high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    Hypercubic { side: usize },
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    dim: usize,
    strata: Vec<Stratum>,
    kind: PartitionKind,
}

impl Partition {
    /// `l^d` cubes of side `1/l`, indexed in row-major order of their grid
    /// coordinates (last axis fastest).
    pub fn hypercubic(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 || side == 0 {
            return Err(Error::InvalidParameter(
                "dimension and side count must be positive".into(),
            ));
        }
        let count = u32::try_from(dim)
            .ok()
            .and_then(|d| side.checked_pow(d))
            .filter(|&k| k <= MAX_STRATA)
            .ok_or(Error::Capacity { side, dim })?;
        let weight = 1.0 / count as f64;
        let strata = (0..count)
            .map(|mut idx| {
                let mut lower = vec![0.0; dim];
                let mut upper = vec![0.0; dim];
                for axis in (0..dim).rev() {
                    let cell = idx % side;
                    idx /= side;
                    lower[axis] = cell as f64 / side as f64;
                    upper[axis] = (cell + 1) as f64 / side as f64;
                }
                Stratum { lower, upper, weight }
            })
            .collect();
        Ok(Partition {
            dim,
            strata,
            kind: PartitionKind::Hypercubic { side },
        })
    }

    /// Hyper-cubic partition with `k` strata; `k` must be a perfect `d`-th power.
    pub fn with_strata_count(dim: usize, k: usize) -> Result<Self> {
        let side = integer_root(k, dim)
            .ok_or_else(|| Error::InvalidParameter(format!("K = {k} is not a perfect {dim}-th power")))?;
        Self::hypercubic(dim, side)
    }

    /// Arbitrary box partition. Only total measure and dimensions are checked.
    pub fn general(dim: usize, strata: Vec<Stratum>) -> Result<Self> {
        if strata.is_empty() || strata.iter().any(|s| s.dim() != dim) {
            return Err(Error::InvalidParameter(
                "strata must be nonempty and share the partition dimension".into(),
            ));
        }
        let total: f64 = strata.iter().map(Stratum::weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "stratum weights sum to {total}, not 1"
            )));
        }
        Ok(Partition {
            dim,
            strata,
            kind: PartitionKind::General,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> PartitionKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn stratum(&self, index: usize) -> Result<&Stratum> {
        self.strata.get(index).ok_or(Error::InvalidStratum {
            index,
            count: self.len(),
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.strata.iter().map(Stratum::weight).collect()
    }

    pub fn max_diameter(&self) -> f64 {
        self.strata.iter().map(Stratum::diameter).fold(0.0, f64::max)
    }

    /// Splits stratum `index` into two halves along `axis`; the lower half
    /// keeps `index` and the upper half is inserted right after it.
    pub fn refine(&self, index: usize, axis: usize) -> Result<Partition> {
        let target = self.stratum(index)?;
        if axis >= self.dim {
            return Err(Error::InvalidParameter(format!(
                "axis {axis} out of range for dimension {}",
                self.dim
            )));
        }
        let (low, high) = target.halves(axis);
        let mut strata = self.strata.clone();
        strata[index] = low;
        strata.insert(index + 1, high);
        Ok(Partition {
            dim: self.dim,
            strata,
            kind: PartitionKind::General,
        })
    }

    /// Index of the stratum containing `x`.
    pub fn stratum_of(&self, x: &Point) -> Result<usize> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let coords = x.coords();
        if let PartitionKind::Hypercubic { side } = self.kind {
            let l = side as f64;
            let index = coords.iter().fold(0usize, |acc, &xi| {
                let mut cell = ((xi * l).floor() as usize).min(side - 1);
                // match the bounds used at construction exactly
                if cell > 0 && xi < cell as f64 / l {
                    cell -= 1;
                } else if cell + 1 < side && xi >= (cell + 1) as f64 / l {
                    cell += 1;
                }
                acc * side + cell
            });
            debug_assert!(self.strata[index].contains(coords));
            return Ok(index);
        }
        self.strata
            .iter()
            .position(|s| s.contains(coords))
            .ok_or_else(|| Error::Precondition(format!("point {coords:?} not covered by the partition")))
    }
}

/// Exact integer `d`-th root of `k`, if any.
pub fn integer_root(k: usize, dim: usize) -> Option<usize> {
    if k == 0 || dim == 0 {
        return None;
    }
    let approx = (k as f64).powf(1.0 / dim as f64).round() as usize;
    (approx.saturating_sub(1)..=approx + 1)
        .find(|&l| l >= 1 && u32::try_from(dim).ok().and_then(|d| l.checked_pow(d)) == Some(k))
}
