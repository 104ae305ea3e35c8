//! Acceptance-length statistics for draft-verify decoding.
//!
//! When a verifier checks draft tokens position by position with a
//! constant per-position stopping probability `p`, the number of
//! tokens an event emits (accepted run plus the closing correction or
//! bonus) follows a geometric law truncated at the block capacity `n`:
//!
//! ```text
//! P(len = k) = p * (1 - p)^(k-1)   for k < n
//! P(len = n) = (1 - p)^(n-1)
//! ```
//!
//! `alpha = 1 - p` is the per-position acceptance rate: for
//! memoryless models `p` equals the total variation distance between
//! the verifier's and the drafter's next-token distributions. The
//! module provides the exact pmf, the closed-form expectation
//! `(1 - (1-p)^n) / p`, a variance oracle computed by direct pmf
//! summation, empirical estimators over decode traces, and a Monte
//! Carlo harness for cross-checking all of the above.

use serde::Serialize;

use crate::engine::DecodeTrace;
use crate::error::{Error, Result};
use crate::rng::DecodeRng;

/// Parameters of the truncated geometric acceptance-length law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncGeomParams {
    /// Per-position stopping probability: the chance that a draft
    /// token is rejected, ending the accepted run at that position.
    pub p: f64,
    /// Maximum event length (accepted run plus the closing token).
    pub n: usize,
}

impl TruncGeomParams {
    pub fn new(p: f64, n: usize) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 || p > 1.0 {
            return Err(Error::invalid_input(format!(
                "stopping probability {p} must lie in (0, 1]"
            )));
        }
        if n == 0 {
            return Err(Error::invalid_input("maximum length n must be >= 1"));
        }
        Ok(TruncGeomParams { p, n })
    }

    /// Per-position acceptance rate `1 - p`.
    pub fn alpha(&self) -> f64 {
        1.0 - self.p
    }
}

/// Probability that a verification event emits exactly `k` tokens,
/// `1 <= k <= n`.
pub fn trunc_geom_pmf(params: &TruncGeomParams, k: usize) -> Result<f64> {
    if k < 1 || k > params.n {
        return Err(Error::invalid_input(format!(
            "length {k} outside support 1..={}",
            params.n
        )));
    }
    let alpha = params.alpha();
    if k < params.n {
        Ok(params.p * alpha.powi(k as i32 - 1))
    } else {
        Ok(alpha.powi(params.n as i32 - 1))
    }
}

/// The full pmf as a vector indexed by `k - 1` for `k = 1..=n`.
pub fn trunc_geom_pmf_all(params: &TruncGeomParams) -> Vec<f64> {
    (1..=params.n)
        .map(|k| trunc_geom_pmf(params, k).expect("k in support"))
        .collect()
}

/// Mean event length, `(1 - (1-p)^n) / p`. Equals the geometric
/// series `1 + alpha + ... + alpha^(n-1)`, so it grows with the
/// acceptance rate and is capped by both `n` and `1/p`.
pub fn expected_acceptance(params: &TruncGeomParams) -> f64 {
    (1.0 - params.alpha().powi(params.n as i32)) / params.p
}

/// Variance of the event length computed by exact pmf summation,
/// `E[len^2] - (E[len])^2`. This is the ground truth the closed-form
/// expression in [`variance_formula`] is compared against.
pub fn variance_acceptance_oracle(params: &TruncGeomParams) -> f64 {
    let pmf = trunc_geom_pmf_all(params);
    let mut first = 0.0;
    let mut second = 0.0;
    for (i, &m) in pmf.iter().enumerate() {
        let k = (i + 1) as f64;
        first += k * m;
        second += k * k * m;
    }
    (second - first * first).max(0.0)
}

/// Literal evaluation of the closed-form variance expression
///
/// ```text
/// sigma^2 = [alpha * (1 - (n^2 - 1) * alpha^n) - (n^2 - 1) * alpha^(n+1)] / (1 - alpha)^2
/// ```
///
/// with `alpha` the per-position acceptance rate. Shipped for
/// comparison reporting only: the expression is inconsistent with the
/// exact pmf at small `n` (it yields 2.0 at `alpha = 0.5, n = 1` where
/// the true variance is 0, and -1.0 at `alpha = 0.5, n = 2` where the
/// truth is 0.25), so [`variance_acceptance_oracle`] is authoritative.
pub fn variance_formula(alpha: f64, n: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid_input(format!(
            "acceptance rate {alpha} must lie in [0, 1)"
        )));
    }
    if n == 0 {
        return Err(Error::invalid_input("maximum length n must be >= 1"));
    }
    let c = (n as f64) * (n as f64) - 1.0;
    let numerator = alpha * (1.0 - c * alpha.powi(n as i32)) - c * alpha.powi(n as i32 + 1);
    Ok(numerator / ((1.0 - alpha) * (1.0 - alpha)))
}

/// Sample statistics of block lengths at one adjacency of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcceptanceStats {
    pub mean: f64,
    /// Unbiased sample variance; 0 when only one observation exists.
    pub variance: f64,
    pub count: u64,
}

fn stats_of(values: impl Iterator<Item = f64> + Clone) -> Option<AcceptanceStats> {
    let count = values.clone().count();
    if count == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / count as f64;
    let variance = if count == 1 {
        0.0
    } else {
        values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64
    };
    Some(AcceptanceStats {
        mean,
        variance,
        count: count as u64,
    })
}

/// Mean and unbiased variance of the verified block lengths at the
/// given adjacency (0 is the strongest verifier's adjacency).
pub fn empirical_acceptance_stats(
    trace: &DecodeTrace,
    adjacency: usize,
) -> Result<AcceptanceStats> {
    let blocks = trace.block_lengths.get(adjacency).ok_or_else(|| {
        Error::invalid_input(format!(
            "trace has {} adjacencies, none at index {adjacency}",
            trace.block_lengths.len()
        ))
    })?;
    stats_of(blocks.iter().map(|&b| b as f64)).ok_or_else(|| {
        Error::invalid_input(format!(
            "adjacency {adjacency} recorded no verification events"
        ))
    })
}

/// Simulate the truncated geometric acceptance process: each trial
/// walks positions 1..n, stopping at position k with probability `p`,
/// and records the stopping length. Deterministic given the seed.
pub fn monte_carlo_acceptance(
    params: &TruncGeomParams,
    trials: u64,
    seed: u64,
) -> Result<AcceptanceStats> {
    if trials == 0 {
        return Err(Error::invalid_input("trials must be >= 1"));
    }
    let mut rng = DecodeRng::new(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        let mut len = params.n;
        for k in 1..params.n {
            if rng.next_f64() < params.p {
                len = k;
                break;
            }
        }
        let l = len as f64;
        sum += l;
        sum_sq += l * l;
    }
    let t = trials as f64;
    let mean = sum / t;
    let variance = if trials == 1 {
        0.0
    } else {
        ((sum_sq - sum * sum / t) / (t - 1.0)).max(0.0)
    };
    Ok(AcceptanceStats {
        mean,
        variance,
        count: trials,
    })
}
