//! Choosing the number of hyper-cubic strata for a budget `n`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrataChoice {
    /// Strata per axis `l`.
    pub side_count: usize,
    /// `K_n = l^d`.
    pub k_n: usize,
}

/// `l = ⌊(n^{d/(d+3α)})^{1/d}⌋` (at least 1) and `K_n = l^d`, which balances
/// the partition quality against MC-UCB's regret for `(M, α)`-Hölder
/// functions.
pub fn choose_num_strata(n: usize, dim: usize, alpha: f64) -> Result<StrataChoice> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidParameter("n and d must be positive".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0,1], got {alpha}")));
    }
    let d = dim as f64;
    let nf = n as f64;
    let exponent = d + 3.0 * alpha;
    let mut side = nf.powf(d / exponent).powf(1.0 / d).floor().max(1.0) as usize;
    // l satisfies l^(d+3α) <= n; repair float error around exact powers
    let fits = |l: usize| (l as f64).powf(exponent) <= nf * (1.0 + 1e-12);
    while fits(side + 1) {
        side += 1;
    }
    while side > 1 && !fits(side) {
        side -= 1;
    }
    let k_n = u32::try_from(dim)
        .ok()
        .and_then(|p| side.checked_pow(p))
        .ok_or(Error::Capacity { side, dim })?;
    Ok(StrataChoice { side_count: side, k_n })
}

/// Exponent `(d + 4α)/(d + 3α)` of the optimal rate in `n`.
pub fn rate_exponent(dim: usize, alpha: f64) -> f64 {
    let d = dim as f64;
    (d + 4.0 * alpha) / (d + 3.0 * alpha)
}

/// `C d^{2α/(3d) + 1/2} √(log n) n^{-(d+4α)/(d+3α)} (1 + d^α n^{-α/(d+3α)})`,
/// an upper bound on the excess pseudo-risk of MC-UCB run with
/// [`choose_num_strata`]. The constant `C` is supplied by the caller.
pub fn tradeoff_bound(n: usize, dim: usize, alpha: f64, constant: f64) -> f64 {
    let (d, nf) = (dim as f64, n as f64);
    constant
        * d.powf(2.0 * alpha / (3.0 * d) + 0.5)
        * nf.ln().sqrt()
        * nf.powf(-rate_exponent(dim, alpha))
        * (1.0 + d.powf(alpha) * nf.powf(-alpha / (d + 3.0 * alpha)))
}

/// One candidate for the constant of [`tradeoff_bound`]:
/// `70 (1 + M) Σ √(1 + 3b + 4 F²) ((F + 4)/4)^{1/3}` with `F = f(0) + s(0) + M`.
pub fn tradeoff_constant(holder_m: f64, b: f64, f0_plus_s0: f64, sigma: f64) -> f64 {
    let f = f0_plus_s0 + holder_m;
    70.0 * (1.0 + holder_m) * sigma * (1.0 + 3.0 * b + 4.0 * f * f).sqrt() * ((f + 4.0) / 4.0).cbrt()
}
