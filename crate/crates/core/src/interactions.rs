//! Weight kernels: the deterministic Cucker–Smale weights and the random
//! link models (independent failures, random strengths, and
//! distance-dependent connection probability).
//!
//! Every model carries a certificate `(p, α)` such that
//! `E[a_ij[t+1] | F_t] >= p / (1 + ‖x_i[t] - x_j[t]‖)^α`.

use serde::{Deserialize, Serialize};

use crate::error::{FlockError, Result};
use crate::hierarchy::Hierarchy;
use crate::rng::RngStream;
use crate::state::FlockState;
use crate::weights::WeightMatrix;

/// `K / (σ² + d²)^β`.
pub fn cs_weight(distance: f64, gain: f64, sigma: f64, beta: f64) -> f64 {
    gain / (sigma * sigma + distance * distance).powf(beta)
}

/// `p / (1 + d)^α`, the conditional-expectation floor.
pub fn power_bound(distance: f64, p: f64, alpha: f64) -> f64 {
    p * (1.0 + distance).powf(-alpha)
}

/// Lower-bound constants for the conditional mean of every weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub p: f64,
    pub alpha: f64,
}

/// Law of the multiplier `X` in the random-strength model. Supported on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrengthDistribution {
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
    /// `high` with probability `prob_high`, else `low`.
    TwoPoint { low: f64, high: f64, prob_high: f64 },
}

impl StrengthDistribution {
    /// `Uniform[max(2p - 1, 0), 1]`, whose mean is `max(p, 1/2) >= p`.
    pub fn default_for(p: f64) -> Self {
        StrengthDistribution::Uniform { low: (2.0 * p - 1.0).max(0.0), high: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            StrengthDistribution::Uniform { low, high } => 0.5 * (low + high),
            StrengthDistribution::Constant { value } => value,
            StrengthDistribution::TwoPoint { low, high, prob_high } => {
                low + prob_high * (high - low)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = match *self {
            StrengthDistribution::Uniform { low, high } => unit(low) && unit(high) && low <= high,
            StrengthDistribution::Constant { value } => unit(value),
            StrengthDistribution::TwoPoint { low, high, prob_high } => {
                unit(low) && unit(high) && unit(prob_high) && low <= high
            }
        };
        if ok {
            Ok(())
        } else {
            Err(FlockError::InvalidParameter(format!(
                "strength distribution {self:?} is not supported on [0, 1]"
            )))
        }
    }

    /// Inverse-CDF draw from a uniform variate `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            StrengthDistribution::Uniform { low, high } => (low + u * (high - low)).min(high),
            StrengthDistribution::Constant { value } => value,
            StrengthDistribution::TwoPoint { low, high, prob_high } => {
                if u < prob_high {
                    high
                } else {
                    low
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionKind {
    /// `K / (σ² + d²)^β`; admitted only when `K / σ^{2β} <= 1`.
    DeterministicCs { gain: f64, sigma: f64, beta: f64 },
    /// `(1 + d)^{-α}`.
    PowerLaw { alpha: f64 },
    /// `X (1 + d)^{-α}` with `X ~ Bernoulli(p)` independent across links and steps.
    BernoulliFailure { p: f64, alpha: f64 },
    /// `X (1 + d)^{-α}` with `X` drawn from `distribution`, `E X >= p`.
    ScaledRandom {
        p: f64,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        distribution: Option<StrengthDistribution>,
    },
    /// `p` with probability `(1 + d)^{-α}`, else 0.
    RandomEnvironment { p: f64, alpha: f64 },
}

/// A validated kernel together with its lower-bound certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionModel {
    kind: InteractionKind,
    certificate: Certificate,
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(FlockError::InvalidParameter(format!("p = {p} must lie in (0, 1]")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(FlockError::InvalidParameter(format!("alpha = {alpha} must be finite and >= 0")))
    }
}

impl InteractionModel {
    pub fn new(kind: InteractionKind) -> Result<Self> {
        let certificate = match kind {
            InteractionKind::DeterministicCs { gain, sigma, beta } => {
                for (name, val) in [("K", gain), ("sigma", sigma), ("beta", beta)] {
                    if !(val > 0.0 && val.is_finite()) {
                        return Err(FlockError::InvalidParameter(format!(
                            "{name} = {val} must be positive and finite"
                        )));
                    }
                }
                let peak = gain / sigma.powf(2.0 * beta);
                if peak > 1.0 {
                    return Err(FlockError::InvalidParameter(format!(
                        "Cucker-Smale peak weight K/sigma^(2 beta) = {peak} exceeds 1"
                    )));
                }
                // σ² + d² <= max(σ, 1)² (1 + d)²
                Certificate { p: gain / sigma.max(1.0).powf(2.0 * beta), alpha: 2.0 * beta }
            }
            InteractionKind::PowerLaw { alpha } => {
                check_alpha(alpha)?;
                Certificate { p: 1.0, alpha }
            }
            InteractionKind::BernoulliFailure { p, alpha }
            | InteractionKind::RandomEnvironment { p, alpha } => {
                check_p(p)?;
                check_alpha(alpha)?;
                Certificate { p, alpha }
            }
            InteractionKind::ScaledRandom { p, alpha, distribution } => {
                check_p(p)?;
                check_alpha(alpha)?;
                let dist = distribution.unwrap_or_else(|| StrengthDistribution::default_for(p));
                dist.validate()?;
                if dist.mean() < p {
                    return Err(FlockError::InvalidParameter(format!(
                        "strength distribution mean {} is below p = {p}",
                        dist.mean()
                    )));
                }
                Certificate { p, alpha }
            }
        };
        Ok(InteractionModel { kind, certificate })
    }

    pub fn kind(&self) -> &InteractionKind {
        &self.kind
    }

    pub fn certificate(&self) -> Certificate {
        self.certificate
    }

    pub fn is_random(&self) -> bool {
        !matches!(
            self.kind,
            InteractionKind::DeterministicCs { .. } | InteractionKind::PowerLaw { .. }
        )
    }

    /// One link's weight at distance `d`, given the link's uniform variate `u`.
    pub fn weight(&self, distance: f64, u: f64) -> f64 {
        let w = match self.kind {
            InteractionKind::DeterministicCs { gain, sigma, beta } => {
                cs_weight(distance, gain, sigma, beta)
            }
            InteractionKind::PowerLaw { alpha } => power_bound(distance, 1.0, alpha),
            InteractionKind::BernoulliFailure { p, alpha } => {
                if u < p {
                    power_bound(distance, 1.0, alpha)
                } else {
                    0.0
                }
            }
            InteractionKind::ScaledRandom { p, alpha, distribution } => {
                let dist = distribution.unwrap_or_else(|| StrengthDistribution::default_for(p));
                dist.quantile(u) * power_bound(distance, 1.0, alpha)
            }
            InteractionKind::RandomEnvironment { p, alpha } => {
                if u < power_bound(distance, 1.0, alpha) {
                    p
                } else {
                    0.0
                }
            }
        };
        w.clamp(0.0, 1.0)
    }

    /// Exact `E[a_ij | distance]` under this model.
    pub fn expected_weight(&self, distance: f64) -> f64 {
        match self.kind {
            InteractionKind::DeterministicCs { .. } | InteractionKind::PowerLaw { .. } => {
                self.weight(distance, 0.0)
            }
            InteractionKind::BernoulliFailure { p, alpha } => power_bound(distance, p, alpha),
            InteractionKind::ScaledRandom { p, alpha, distribution } => {
                let dist = distribution.unwrap_or_else(|| StrengthDistribution::default_for(p));
                dist.mean() * power_bound(distance, 1.0, alpha)
            }
            InteractionKind::RandomEnvironment { p, alpha } => power_bound(distance, p, alpha),
        }
    }
}

/// Draw the weights applied at step `state.t() + 1`.
///
/// Link `(i, j)` consumes the variate at stream coordinates
/// `(t + 1, i, j, 0)` with 1-based labels; distances come from the state at
/// time `t`, so the result is `F_t`-measurable apart from the fresh variates.
pub fn sample_weights(
    model: &InteractionModel,
    state: &FlockState,
    hier: &Hierarchy,
    rng: &RngStream,
) -> Result<WeightMatrix> {
    if state.k() != hier.k() {
        return Err(FlockError::DimensionMismatch(format!(
            "{}-bird state with a {}-bird hierarchy",
            state.k(),
            hier.k()
        )));
    }
    let t = state.t() + 1;
    let x = state.positions();
    let rows = (0..hier.k())
        .map(|i| {
            hier.leader_indices(i)
                .iter()
                .map(|&j| {
                    let d = x[i].distance(&x[j]);
                    let u = if model.is_random() {
                        rng.uniform(t, i as u64 + 1, j as u64 + 1, 0)
                    } else {
                        0.0
                    };
                    model.weight(d, u)
                })
                .collect()
        })
        .collect();
    WeightMatrix::new(hier, t, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Frame;
    use crate::vec3::Vec3;

    fn pair_at(d: f64) -> FlockState {
        FlockState::new(0, vec![Vec3::ZERO, Vec3::new(d, 0.0, 0.0)], vec![Vec3::ZERO; 2], Frame::Relative)
            .unwrap()
    }

    #[test]
    fn cs_weight_values() {
        assert_eq!(cs_weight(0.0, 1.0, 1.0, 1.0), 1.0);
        assert!((cs_weight(3f64.sqrt(), 1.0, 1.0, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(cs_weight(0.0, 2.0, 1.0, 0.5), 2.0);
        let err = InteractionModel::new(InteractionKind::DeterministicCs { gain: 2.0, sigma: 1.0, beta: 0.5 });
        assert!(matches!(err, Err(FlockError::InvalidParameter(_))));
    }

    #[test]
    fn power_bound_values() {
        assert_eq!(power_bound(17.0, 0.3, 0.0), 0.3);
        assert_eq!(power_bound(3.0, 1.0, 0.5), 0.5);
        assert_eq!(power_bound(1.0, 0.8, 1.0), 0.4);
    }

    #[test]
    fn cs_certificate_is_a_floor() {
        for (gain, sigma, beta) in [(0.5, 1.0, 0.5), (0.2, 0.5, 0.3), (1.0, 2.0, 1.5)] {
            let m = InteractionModel::new(InteractionKind::DeterministicCs { gain, sigma, beta }).unwrap();
            let c = m.certificate();
            assert!(c.p > 0.0 && c.p <= 1.0);
            for d in [0.0, 0.1, 1.0, 3.0, 10.0, 1e3] {
                assert!(m.weight(d, 0.0) >= power_bound(d, c.p, c.alpha) * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn degenerate_bernoulli_is_all_ones() {
        let m = InteractionModel::new(InteractionKind::BernoulliFailure { p: 1.0, alpha: 0.0 }).unwrap();
        let hier = Hierarchy::complete(4).unwrap();
        let s = FlockState::new(
            0,
            vec![Vec3::ZERO, Vec3::new(5.0, 0.0, 0.0), Vec3::new(0.0, 9.0, 0.0), Vec3::new(1.0, 1.0, 1.0)],
            vec![Vec3::ZERO; 4],
            Frame::Relative,
        )
        .unwrap();
        for seed in 0..5 {
            let w = sample_weights(&m, &s, &hier, &RngStream::new(seed, 0)).unwrap();
            for i in 0..4 {
                assert!(w.row(i).iter().all(|&a| a == 1.0));
            }
        }
    }

    #[test]
    fn bernoulli_takes_two_values() {
        let m = InteractionModel::new(InteractionKind::BernoulliFailure { p: 0.3, alpha: 0.5 }).unwrap();
        let hier = Hierarchy::chain(2).unwrap();
        let s = pair_at(3.0);
        let rng = RngStream::new(9, 0);
        let mut seen = [false; 2];
        for t in 0..200 {
            let s_t = FlockState::new(t, s.positions().to_vec(), s.velocities().to_vec(), Frame::Relative).unwrap();
            let a = sample_weights(&m, &s_t, &hier, &rng).unwrap().row(1)[0];
            assert!(a == 0.0 || a == 0.5, "got {a}");
            seen[(a == 0.5) as usize] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn random_environment_at_zero_distance_always_connects() {
        let m = InteractionModel::new(InteractionKind::RandomEnvironment { p: 0.7, alpha: 1.0 }).unwrap();
        for i in 0..1000 {
            assert_eq!(m.weight(0.0, i as f64 / 1000.0), 0.7);
        }
    }

    #[test]
    fn bernoulli_with_certain_success_is_power_law() {
        let b = InteractionModel::new(InteractionKind::BernoulliFailure { p: 1.0, alpha: 0.7 }).unwrap();
        let pl = InteractionModel::new(InteractionKind::PowerLaw { alpha: 0.7 }).unwrap();
        for d in [0.0, 0.5, 2.0, 40.0] {
            assert_eq!(b.weight(d, 0.999), pl.weight(d, 0.0));
        }
    }

    #[test]
    fn scaled_random_validation() {
        let default = StrengthDistribution::default_for(0.3);
        assert_eq!(default, StrengthDistribution::Uniform { low: 0.0, high: 1.0 });
        assert_eq!(StrengthDistribution::default_for(0.8).mean(), 0.8);
        let low_mean = InteractionKind::ScaledRandom {
            p: 0.6,
            alpha: 1.0,
            distribution: Some(StrengthDistribution::Uniform { low: 0.0, high: 1.0 }),
        };
        assert!(InteractionModel::new(low_mean).is_err());
        let off_support = InteractionKind::ScaledRandom {
            p: 0.1,
            alpha: 1.0,
            distribution: Some(StrengthDistribution::Constant { value: 1.5 }),
        };
        assert!(InteractionModel::new(off_support).is_err());
    }

    #[test]
    fn parameter_ranges() {
        assert!(InteractionModel::new(InteractionKind::BernoulliFailure { p: 0.0, alpha: 1.0 }).is_err());
        assert!(InteractionModel::new(InteractionKind::BernoulliFailure { p: 1.1, alpha: 1.0 }).is_err());
        assert!(InteractionModel::new(InteractionKind::RandomEnvironment { p: 0.5, alpha: -1.0 }).is_err());
        assert!(InteractionModel::new(InteractionKind::PowerLaw { alpha: f64::INFINITY }).is_err());
    }
}
