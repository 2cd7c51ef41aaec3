//! Online adaptive stratified Monte-Carlo integration of noisy functions.

// comparisons are negated so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod allocate;
pub mod concentration;
pub mod error;
pub mod experiment;
pub mod finance;
pub mod metrics;
pub mod model;
pub mod normal;
pub mod partition;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod select;

pub use error::{Error, Result};

/// Version string written into report metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
