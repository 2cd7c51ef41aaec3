//! The stratum-sampling interface shared by allocators and environments.

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::{partition_truth, QuadratureSpec, StratumTruth};
use crate::model::Environment;
use crate::partition::Partition;

/// A stratified problem seen from an allocator: `K` strata with known
/// weights, each of which can be sampled independently.
pub trait StratumSampler: Sync {
    fn num_strata(&self) -> usize;

    fn weight(&self, k: usize) -> f64;

    /// One noisy sample from stratum `k`.
    fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64;

    fn weights(&self) -> Vec<f64> {
        (0..self.num_strata()).map(|k| self.weight(k)).collect()
    }
}

/// An [`Environment`] paired with a [`Partition`]: sampling stratum `k` draws
/// a uniform point in the box and evaluates the noisy function there.
#[derive(Debug, Clone, Copy)]
pub struct StratifiedEnv<'a> {
    env: &'a Environment,
    partition: &'a Partition,
}

const STACK_DIM: usize = 8;

impl<'a> StratifiedEnv<'a> {
    pub fn new(env: &'a Environment, partition: &'a Partition) -> Result<Self> {
        if env.dim() != partition.dim() {
            return Err(Error::DimensionMismatch {
                expected: env.dim(),
                got: partition.dim(),
            });
        }
        Ok(StratifiedEnv { env, partition })
    }

    pub fn env(&self) -> &'a Environment {
        self.env
    }

    pub fn partition(&self) -> &'a Partition {
        self.partition
    }

    pub fn truth(&self, quad: QuadratureSpec) -> Result<Vec<StratumTruth>> {
        partition_truth(self.env, self.partition, quad)
    }
}

impl StratumSampler for StratifiedEnv<'_> {
    fn num_strata(&self) -> usize {
        self.partition.len()
    }

    fn weight(&self, k: usize) -> f64 {
        self.partition.strata()[k].weight()
    }

    fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        let stratum = &self.partition.strata()[k];
        let dim = stratum.dim();
        if dim <= STACK_DIM {
            let mut buf = [0.0; STACK_DIM];
            stratum.sample_into(rng, &mut buf[..dim]);
            self.env.evaluate_at(&buf[..dim], rng)
        } else {
            let mut buf = vec![0.0; dim];
            stratum.sample_into(rng, &mut buf);
            self.env.evaluate_at(&buf, rng)
        }
    }
}
