//! Flocking guarantees that can be decided from the initial state alone.

use serde::{Deserialize, Serialize};

use super::bounds::{BoundError, BoundParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem1Verdict {
    /// `α < 1`: flocking for every initial state.
    GuaranteedSubcritical,
    /// `α = 1` and every `γ_ℓ` clears its threshold.
    GuaranteedCritical,
    /// The theorem says nothing. This is not a prediction of non-flocking.
    NotGuaranteed,
}

/// One row of the critical-case condition table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub bird: usize,
    #[serde(with = "crate::output::extended_f64")]
    pub gamma: f64,
    pub threshold: f64,
    pub satisfied: bool,
    pub infinite_gamma: bool,
}

/// Threshold on `γ_ℓ`: `k - 1` for `ℓ = 2`, `k - ℓ + 2` for `ℓ >= 3`.
pub fn gamma_threshold(bird: usize, k: usize) -> f64 {
    if bird == 2 {
        k as f64 - 1.0
    } else {
        k as f64 - bird as f64 + 2.0
    }
}

pub fn condition_table(bp: &BoundParams, k: usize) -> Vec<ConditionRow> {
    bp.birds
        .iter()
        .map(|b| {
            let threshold = gamma_threshold(b.bird, k);
            ConditionRow {
                bird: b.bird,
                gamma: b.gamma,
                threshold,
                satisfied: b.gamma > threshold,
                infinite_gamma: b.gamma.is_infinite(),
            }
        })
        .collect()
}

pub fn check_theorem1(bp: &BoundParams, k: usize) -> Theorem1Verdict {
    if bp.alpha < 1.0 {
        Theorem1Verdict::GuaranteedSubcritical
    } else if bp.alpha == 1.0 && condition_table(bp, k).iter().all(|r| r.satisfied) {
        Theorem1Verdict::GuaranteedCritical
    } else {
        Theorem1Verdict::NotGuaranteed
    }
}

/// `p / (2 (k - 1))`.
pub fn corollary2_threshold(p: f64, k: usize) -> f64 {
    p / (2.0 * (k as f64 - 1.0))
}

/// `v0 < p / (2 (k - 1))`, strictly.
pub fn check_corollary2(v0: f64, p: f64, k: usize) -> bool {
    v0 < corollary2_threshold(p, k)
}

/// `t^{k-2} / δ_t · exp(-p / ((2 v0)^α (1 - α)) · (h t)^{1-α})`.
pub fn corollary1_series_term(bp: &BoundParams, k: usize, t: u64, delta_t: f64) -> Result<f64, BoundError> {
    if bp.alpha >= 1.0 {
        return Err(BoundError::NotSubcritical(bp.alpha));
    }
    if bp.v0 <= 0.0 {
        return Err(BoundError::Inapplicable);
    }
    if !(delta_t > 0.0) {
        return Err(BoundError::InvalidArgument(format!("delta_t = {delta_t} must be positive")));
    }
    let rate = bp.p / ((2.0 * bp.v0).powf(bp.alpha) * (1.0 - bp.alpha));
    let tf = t as f64;
    Ok(tf.powi(k as i32 - 2) / delta_t * (-rate * (bp.h * tf).powf(1.0 - bp.alpha)).exp())
}

pub const SERIES_BLOCK: u64 = 10;
pub const SERIES_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnosis {
    pub converged: bool,
    pub terms: u64,
    pub partial_sum: f64,
    /// Last block's sum over the running partial sum.
    pub last_block_ratio: f64,
}

/// Sum the series from `t = 1` in blocks of 10 until one block adds less than
/// `1e-6` of the running total, or `cap` terms have been used.
pub fn corollary1_partial_sums(
    bp: &BoundParams,
    k: usize,
    delta: impl Fn(u64) -> f64,
    cap: u64,
) -> Result<SeriesDiagnosis, BoundError> {
    let mut partial = 0.0;
    let mut t = 0;
    let mut ratio = f64::INFINITY;
    while t < cap {
        let mut block = 0.0;
        for _ in 0..SERIES_BLOCK {
            t += 1;
            block += corollary1_series_term(bp, k, t, delta(t))?;
        }
        partial += block;
        if !partial.is_finite() {
            break;
        }
        ratio = if partial > 0.0 { block / partial } else { 0.0 };
        if ratio < SERIES_RTOL {
            return Ok(SeriesDiagnosis { converged: true, terms: t, partial_sum: partial, last_block_ratio: ratio });
        }
    }
    Ok(SeriesDiagnosis { converged: false, terms: t, partial_sum: partial, last_block_ratio: ratio })
}
