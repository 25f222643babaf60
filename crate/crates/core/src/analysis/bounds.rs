//! Constants derived from the initial state and the closed-form bounds on
//! the expected contraction products.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::FlockError;
use crate::hierarchy::Hierarchy;
use crate::interactions::Certificate;
use crate::state::{FlockState, Frame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("bound requires alpha < 1, got {0}")]
    NotSubcritical(f64),
    #[error("bound requires alpha <= 1, got {0}")]
    AlphaTooLarge(f64),
    /// `B0 = 0`: all relative velocities already vanish, flocking is trivial.
    #[error("bound inapplicable: B0 = 0 (zero initial relative velocity)")]
    Inapplicable,
    #[error("bound not available for bird {bird}: w0 = 0 (a leader shares its initial velocity)")]
    Degenerate { bird: usize },
    #[error("product range requires tau <= t + 1, got tau = {tau}, t = {t}")]
    InvalidRange { tau: u64, t: u64 },
    #[error("no bird {0} with leaders in this flock")]
    UnknownBird(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Per-bird constants for `ℓ = 2..=k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirdConstants {
    pub bird: usize,
    /// `min_{j ∈ L(ℓ)} ‖v_ℓ[0] - v_j[0]‖`.
    pub w0: f64,
    /// `Σ_{j ∈ L(ℓ)} p / ‖v_ℓ[0] - v_j[0]‖`, infinite when any gap is zero.
    #[serde(with = "crate::output::extended_f64")]
    pub gamma: f64,
    /// `δ_2 = γ_2`, `δ_ℓ = min(δ_{ℓ-1}, γ_ℓ) - 1`.
    #[serde(with = "crate::output::extended_f64")]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub h: f64,
    pub p: f64,
    pub alpha: f64,
    pub x0: f64,
    pub v0: f64,
    /// `1 + 2 x0`.
    pub a0: f64,
    /// `2 h v0`.
    pub b0: f64,
    /// `h p / ((1 - α) B0)`; present only when `α < 1` and `B0 > 0`.
    pub kappa: Option<f64>,
    pub birds: Vec<BirdConstants>,
}

impl BoundParams {
    pub fn bird(&self, label: usize) -> Option<&BirdConstants> {
        self.birds.iter().find(|b| b.bird == label)
    }
}

pub fn derive_bound_params(
    initial: &FlockState,
    hier: &Hierarchy,
    h: f64,
    cert: Certificate,
) -> Result<BoundParams, FlockError> {
    if initial.frame() != Frame::Relative {
        return Err(FlockError::FrameMismatch("bound constants are defined on the relative frame"));
    }
    if hier.k() != initial.k() {
        return Err(FlockError::DimensionMismatch(format!(
            "{}-bird state with a {}-bird hierarchy",
            initial.k(),
            hier.k()
        )));
    }
    let Certificate { p, alpha } = cert;
    let x0 = initial.sup_position();
    let v0 = initial.sup_velocity();
    let a0 = 1.0 + 2.0 * x0;
    let b0 = 2.0 * h * v0;
    let kappa = (alpha < 1.0 && b0 > 0.0).then(|| h * p / ((1.0 - alpha) * b0));

    let v = initial.velocities();
    let mut birds = Vec::with_capacity(hier.k() - 1);
    let mut prev_delta = f64::NAN;
    for i in 1..hier.k() {
        let gaps: Vec<f64> = hier.leader_indices(i).iter().map(|&j| v[i].distance(&v[j])).collect();
        let w0 = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        let gamma = if gaps.contains(&0.0) {
            f64::INFINITY
        } else {
            gaps.iter().map(|g| p / g).sum()
        };
        let delta = if i == 1 { gamma } else { prev_delta.min(gamma) - 1.0 };
        prev_delta = delta;
        birds.push(BirdConstants { bird: i + 1, w0, gamma, delta });
    }
    Ok(BoundParams { h, p, alpha, x0, v0, a0, b0, kappa, birds })
}

/// Bound on `E[∏_{σ=τ+1}^{t+1} (1 - h Σ_j a_ℓj[σ]) | F_τ]` for `α < 1`:
/// `exp(-κ ((A0 + B0 t)^{1-α} - (A0 + B0 τ)^{1-α}))`. The same for every bird.
pub fn lemma2_bound_subcritical(bp: &BoundParams, tau: u64, t: u64) -> Result<f64, BoundError> {
    if tau > t + 1 {
        return Err(BoundError::InvalidRange { tau, t });
    }
    if bp.alpha >= 1.0 {
        return Err(BoundError::NotSubcritical(bp.alpha));
    }
    if tau == t + 1 {
        return Ok(1.0);
    }
    let kappa = bp.kappa.ok_or(BoundError::Inapplicable)?;
    let e = 1.0 - bp.alpha;
    let span = (bp.a0 + bp.b0 * t as f64).powf(e) - (bp.a0 + bp.b0 * tau as f64).powf(e);
    Ok((-kappa * span).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalBound {
    pub value: f64,
    /// `γ_ℓ = ∞`: the value is the limit 0 (or 1 for the empty product).
    pub infinite_gamma: bool,
}

/// Bound on the same product for `α = 1` (valid for any `α <= 1`):
/// `((A0 + h w0ℓ τ) / (A0 + h w0ℓ (t + 1)))^{γ_ℓ}`.
pub fn lemma2_bound_critical(bp: &BoundParams, bird: usize, tau: u64, t: u64) -> Result<CriticalBound, BoundError> {
    if tau > t + 1 {
        return Err(BoundError::InvalidRange { tau, t });
    }
    if bp.alpha > 1.0 {
        return Err(BoundError::AlphaTooLarge(bp.alpha));
    }
    let c = bp.bird(bird).ok_or(BoundError::UnknownBird(bird))?;
    if c.w0 == 0.0 {
        return Err(BoundError::Degenerate { bird });
    }
    if tau == t + 1 {
        return Ok(CriticalBound { value: 1.0, infinite_gamma: c.gamma.is_infinite() });
    }
    if c.gamma.is_infinite() {
        return Ok(CriticalBound { value: 0.0, infinite_gamma: true });
    }
    let hw = bp.h * c.w0;
    let ratio = (bp.a0 + hw * tau as f64) / (bp.a0 + hw * (t + 1) as f64);
    Ok(CriticalBound { value: ratio.powf(c.gamma), infinite_gamma: false })
}

/// `E‖v_2[t]‖ <= ‖v_2[0]‖ e^{κ A0^{1-α}} e^{-κ (A0 + B0 (t-1))^{1-α}}` for `α < 1`, `t >= 1`.
pub fn second_bird_speed_bound_subcritical(bp: &BoundParams, v2_norm: f64, t: u64) -> Result<f64, BoundError> {
    if bp.alpha >= 1.0 {
        return Err(BoundError::NotSubcritical(bp.alpha));
    }
    if t == 0 {
        return Ok(v2_norm);
    }
    let kappa = bp.kappa.ok_or(BoundError::Inapplicable)?;
    let e = 1.0 - bp.alpha;
    let front = v2_norm * (kappa * bp.a0.powf(e)).exp();
    Ok(front * (-kappa * (bp.a0 + bp.b0 * (t - 1) as f64).powf(e)).exp())
}

/// `E‖v_2[t]‖ <= ‖v_2[0]‖ (A0 / (A0 + h w02 t))^{γ_2}` for `α <= 1`, `t >= 1`.
pub fn second_bird_speed_bound_critical(bp: &BoundParams, v2_norm: f64, t: u64) -> Result<f64, BoundError> {
    if t == 0 {
        return Ok(v2_norm);
    }
    let b = lemma2_bound_critical(bp, 2, 0, t - 1)?;
    Ok(v2_norm * b.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec3::Vec3;

    fn params(a0: f64, b0: f64, h: f64, p: f64, alpha: f64) -> BoundParams {
        BoundParams {
            h,
            p,
            alpha,
            x0: (a0 - 1.0) / 2.0,
            v0: b0 / (2.0 * h),
            a0,
            b0,
            kappa: (alpha < 1.0 && b0 > 0.0).then(|| h * p / ((1.0 - alpha) * b0)),
            birds: vec![BirdConstants { bird: 2, w0: 1.0 / h, gamma: 2.0, delta: 2.0 }],
        }
    }

    #[test]
    fn stationary_flock() {
        let hier = Hierarchy::chain(3).unwrap();
        let s = FlockState::new(0, vec![Vec3::ZERO; 3], vec![Vec3::ZERO; 3], Frame::Relative).unwrap();
        let bp = derive_bound_params(&s, &hier, 0.5, Certificate { p: 0.5, alpha: 0.5 }).unwrap();
        assert_eq!((bp.a0, bp.b0, bp.kappa), (1.0, 0.0, None));
        assert!(bp.birds.iter().all(|b| b.gamma.is_infinite() && b.w0 == 0.0));
        assert_eq!(lemma2_bound_subcritical(&bp, 0, 5), Err(BoundError::Inapplicable));
    }

    #[test]
    fn gamma_arithmetic() {
        // ‖v2 - v1‖ = 0.5, ‖v3 - v1‖ = 0.5, ‖v3 - v2‖ = 0.25
        let hier = Hierarchy::from_leader_sets(vec![vec![], vec![1], vec![1, 2]]).unwrap();
        let v3 = Vec3::new(0.4375, 0.05859375f64.sqrt(), 0.0);
        let v = vec![Vec3::ZERO, Vec3::new(0.5, 0.0, 0.0), v3];
        let s = FlockState::new(0, vec![Vec3::ZERO; 3], v, Frame::Relative).unwrap();
        let bp = derive_bound_params(&s, &hier, 0.5, Certificate { p: 1.0, alpha: 1.0 }).unwrap();
        assert_eq!(bp.bird(2).unwrap().gamma, 2.0);
        assert!((bp.bird(3).unwrap().gamma - 6.0).abs() < 1e-12);
        assert!((bp.bird(3).unwrap().w0 - 0.25).abs() < 1e-15);
        // δ2 = γ2, δ3 = min(δ2, γ3) - 1
        assert_eq!(bp.bird(2).unwrap().delta, 2.0);
        assert_eq!(bp.bird(3).unwrap().delta, 1.0);
        assert!(bp.kappa.is_none());
        assert!(derive_bound_params(&s, &Hierarchy::chain(2).unwrap(), 0.5, Certificate { p: 1.0, alpha: 1.0 }).is_err());
    }

    #[test]
    fn shared_velocity_means_infinite_gamma() {
        let hier = Hierarchy::from_leader_sets(vec![vec![], vec![1], vec![1, 2]]).unwrap();
        let u = Vec3::new(0.3, 0.0, 0.0);
        let s = FlockState::new(0, vec![Vec3::ZERO; 3], vec![Vec3::ZERO, u, u], Frame::Relative).unwrap();
        let bp = derive_bound_params(&s, &hier, 0.5, Certificate { p: 1.0, alpha: 1.0 }).unwrap();
        let b3 = bp.bird(3).unwrap();
        assert!(b3.gamma.is_infinite());
        assert_eq!(b3.w0, 0.0);
        assert_eq!(lemma2_bound_critical(&bp, 3, 0, 4), Err(BoundError::Degenerate { bird: 3 }));
    }

    #[test]
    fn subcritical_empty_range_is_one() {
        let bp = params(1.0, 1.0, 0.5, 0.5, 0.5);
        assert_eq!(lemma2_bound_subcritical(&bp, 4, 4).unwrap(), 1.0);
        assert_eq!(lemma2_bound_subcritical(&bp, 5, 4).unwrap(), 1.0);
        assert!(matches!(lemma2_bound_subcritical(&bp, 6, 4), Err(BoundError::InvalidRange { .. })));
    }

    #[test]
    fn subcritical_reference_value() {
        // exp(-0.5 (√5 - 1)), 40-digit reference
        let bp = params(1.0, 1.0, 0.5, 0.5, 0.5);
        assert_eq!(bp.kappa, Some(0.5));
        let b = lemma2_bound_subcritical(&bp, 0, 4).unwrap();
        assert!((b - 0.539_003_082_724_044_6).abs() < 1e-15, "{b}");
    }

    #[test]
    fn subcritical_decreases_in_t() {
        let bp = params(3.0, 0.4, 0.2, 0.5, 0.9);
        let mut prev = 1.0;
        for t in 0..200 {
            let b = lemma2_bound_subcritical(&bp, 0, t).unwrap();
            assert!(b <= prev && b > 0.0);
            prev = b;
        }
        assert!(lemma2_bound_subcritical(&params(1.0, 1.0, 0.5, 0.5, 1.0), 0, 1).is_err());
    }

    #[test]
    fn critical_reference_value_and_power_law() {
        // A0 = 1, h w0 = 1, γ = 2
        let bp = params(1.0, 1.0, 0.5, 0.5, 1.0);
        let b = lemma2_bound_critical(&bp, 2, 0, 3).unwrap();
        assert!((b.value - 0.04).abs() < 1e-15);
        assert!(!b.infinite_gamma);
        assert_eq!(lemma2_bound_critical(&bp, 2, 4, 3).unwrap().value, 1.0);

        let mut doubled = bp.clone();
        doubled.birds[0].gamma = 4.0;
        let b2 = lemma2_bound_critical(&doubled, 2, 0, 3).unwrap();
        assert!((b2.value - b.value * b.value).abs() < 1e-15);

        let mut inf = bp.clone();
        inf.birds[0].gamma = f64::INFINITY;
        assert_eq!(lemma2_bound_critical(&inf, 2, 0, 3).unwrap(), CriticalBound { value: 0.0, infinite_gamma: true });
        assert_eq!(lemma2_bound_critical(&inf, 2, 4, 3).unwrap().value, 1.0);
        assert_eq!(lemma2_bound_critical(&bp, 7, 0, 3), Err(BoundError::UnknownBird(7)));
        assert_eq!(lemma2_bound_critical(&params(1.0, 1.0, 0.5, 0.5, 1.5), 2, 0, 3), Err(BoundError::AlphaTooLarge(1.5)));
    }

    #[test]
    fn second_bird_bounds_match_product_bounds() {
        let bp = params(2.0, 0.6, 0.3, 0.5, 0.5);
        for t in 1..50 {
            let direct = second_bird_speed_bound_subcritical(&bp, 1.5, t).unwrap();
            let via = 1.5 * lemma2_bound_subcritical(&bp, 0, t - 1).unwrap();
            assert!((direct - via).abs() <= 1e-13 * via.max(1e-300), "t={t}: {direct} vs {via}");
        }
        assert_eq!(second_bird_speed_bound_subcritical(&bp, 1.5, 0).unwrap(), 1.5);
        let crit = params(1.0, 1.0, 0.5, 0.5, 1.0);
        // (1 / (1 + 2))^2
        let b = second_bird_speed_bound_critical(&crit, 1.0, 2).unwrap();
        assert!((b - 1.0 / 9.0).abs() < 1e-15);
    }
}
