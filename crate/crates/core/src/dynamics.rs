//! The discrete-time update and the change to the leader's frame.

use crate::error::{FlockError, Result};
use crate::hierarchy::Hierarchy;
use crate::state::{FlockState, Frame};
use crate::vec3::Vec3;
use crate::weights::WeightMatrix;

/// Relative rounding slack for the monotonicity checks.
pub const MONOTONE_RTOL: f64 = 1e-12;

/// Largest admissible timestep `1/(k-1)`.
pub fn max_timestep(k: usize) -> f64 {
    1.0 / (k as f64 - 1.0)
}

pub fn check_timestep(h: f64, k: usize) -> Result<()> {
    let max = max_timestep(k);
    if !(h > 0.0 && h <= max) {
        return Err(FlockError::StepTooLarge { h, max });
    }
    Ok(())
}

/// Advance one step.
///
/// Velocities become `(1 - h Σ a_ij) v_i + h Σ a_ij v_j`; positions move by
/// `h` times the old velocity. Works unchanged in either frame.
pub fn step(state: &FlockState, hier: &Hierarchy, weights: &WeightMatrix, h: f64) -> Result<FlockState> {
    let k = state.k();
    check_timestep(h, k)?;
    if hier.k() != k {
        return Err(FlockError::DimensionMismatch(format!(
            "{k}-bird state with a {}-bird hierarchy",
            hier.k()
        )));
    }
    if weights.t() != state.t() + 1 {
        return Err(FlockError::InvalidWeights(format!(
            "weights tagged for step {} applied to state at step {}",
            weights.t(),
            state.t()
        )));
    }
    weights.check_against(hier)?;

    let x = state.positions();
    let v = state.velocities();
    let mut next_v = Vec::with_capacity(k);
    for i in 0..k {
        let row = weights.row(i);
        let coeff = 1.0 - h * weights.row_sum(i);
        // Convex-combination guarantee; allow a few ulps of rounding at the endpoint.
        if !(-4.0 * f64::EPSILON..=1.0).contains(&coeff) {
            return Err(FlockError::InvariantBreach(format!(
                "self-weight {coeff} of bird {} left [0, 1] at step {}",
                i + 1,
                state.t() + 1
            )));
        }
        let mut vi = coeff.max(0.0) * v[i];
        for (&j, &a) in hier.leader_indices(i).iter().zip(row) {
            vi += (h * a) * v[j];
        }
        next_v.push(vi);
    }
    let next_x: Vec<Vec3> = x.iter().zip(v).map(|(&xi, &vi)| xi + h * vi).collect();

    if !next_x.iter().chain(&next_v).all(Vec3::is_finite) {
        return Err(FlockError::InvariantBreach(format!("non-finite state at step {}", state.t() + 1)));
    }
    Ok(FlockState::from_parts_unchecked(state.t() + 1, next_x, next_v, state.frame()))
}

/// Re-express an absolute state with bird 1 as origin and bird 1's (constant)
/// velocity subtracted.
pub fn to_relative(state: &FlockState) -> Result<FlockState> {
    if state.frame() != Frame::Absolute {
        return Err(FlockError::FrameMismatch("state is already in the relative frame"));
    }
    let x1 = state.positions()[0];
    let v1 = state.velocities()[0];
    let x: Vec<Vec3> = state.positions().iter().map(|&p| p - x1).collect();
    let v: Vec<Vec3> = state.velocities().iter().map(|&u| u - v1).collect();
    FlockState::new(state.t(), x, v, Frame::Relative)
}

/// Pathwise checks of the basic a-priori estimates, run after every step.
///
/// * `‖v[t+1]‖∞ <= ‖v[t]‖∞` in the simulation frame;
/// * `‖x[t]‖∞ <= x0 + h v0 t` (relative frame only);
/// * `max_ij ‖x_i - x_j‖ <= 2 x0 + 2 h v0 t`;
/// * bird 1 keeps its initial velocity.
///
/// `x0`, `v0` are taken from the relative version of the initial state.
#[derive(Debug, Clone)]
pub struct PathwiseMonitor {
    h: f64,
    x0: f64,
    v0: f64,
    v_tol: f64,
    leader_velocity: Vec3,
    last_sup_v: f64,
}

impl PathwiseMonitor {
    pub fn new(initial: &FlockState, h: f64) -> Result<Self> {
        let rel = match initial.frame() {
            Frame::Relative => initial.clone(),
            Frame::Absolute => to_relative(initial)?,
        };
        let sup_v = initial.sup_velocity();
        Ok(PathwiseMonitor {
            h,
            x0: rel.sup_position(),
            v0: rel.sup_velocity(),
            v_tol: MONOTONE_RTOL * sup_v.max(1.0),
            leader_velocity: initial.velocities()[0],
            last_sup_v: sup_v,
        })
    }

    pub fn check(&mut self, state: &FlockState) -> Result<()> {
        let t = state.t();
        let sup_v = state.sup_velocity();
        if sup_v > self.last_sup_v + self.v_tol {
            return Err(FlockError::InvariantBreach(format!(
                "velocity sup-norm increased from {} to {sup_v} at step {t}",
                self.last_sup_v
            )));
        }
        self.last_sup_v = sup_v;

        if state.velocities()[0] != self.leader_velocity {
            return Err(FlockError::InvariantBreach(format!("leader velocity changed at step {t}")));
        }

        let reach = self.x0 + self.h * self.v0 * t as f64;
        // Positions accumulate one rounding per step.
        let x_tol = MONOTONE_RTOL * reach.max(1.0) * (1.0 + t as f64);
        if state.frame() == Frame::Relative && state.sup_position() > reach + x_tol {
            return Err(FlockError::InvariantBreach(format!(
                "position sup-norm {} exceeds x0 + h v0 t = {reach} at step {t}",
                state.sup_position()
            )));
        }
        let diameter = state.diameter();
        if diameter > 2.0 * reach + 2.0 * x_tol {
            return Err(FlockError::InvariantBreach(format!(
                "flock diameter {diameter} exceeds 2 x0 + 2 h v0 t = {} at step {t}",
                2.0 * reach
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bird(v2: Vec3, frame: Frame) -> FlockState {
        FlockState::new(0, vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)], vec![Vec3::ZERO, v2], frame)
            .unwrap()
    }

    #[test]
    fn zero_interaction_only_translates() {
        let hier = Hierarchy::complete(3).unwrap();
        let s = FlockState::new(
            0,
            vec![Vec3::ZERO, Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.0, 0.5)],
            vec![Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(2.0, 2.0, 2.0)],
            Frame::Absolute,
        )
        .unwrap();
        let w = WeightMatrix::constant(&hier, 1, 0.0).unwrap();
        let n = step(&s, &hier, &w, 0.5).unwrap();
        assert_eq!(n.velocities(), s.velocities());
        for i in 0..3 {
            assert_eq!(n.positions()[i], s.positions()[i] + 0.5 * s.velocities()[i]);
        }
        assert_eq!(n.t(), 1);
    }

    #[test]
    fn full_adoption_of_leader_velocity() {
        let hier = Hierarchy::chain(2).unwrap();
        let s = two_bird(Vec3::new(1.0, 0.0, 0.0), Frame::Relative);
        let w = WeightMatrix::constant(&hier, 1, 1.0).unwrap();
        let n = step(&s, &hier, &w, 1.0).unwrap();
        assert_eq!(n.velocities()[1], Vec3::ZERO);
        // position used the old velocity
        assert_eq!(n.positions()[1], Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn halving_matches_geometric_decay() {
        let hier = Hierarchy::chain(2).unwrap();
        let mut s = two_bird(Vec3::new(1.0, 0.0, 0.0), Frame::Relative);
        for t in 1..=20u64 {
            let w = WeightMatrix::constant(&hier, t, 1.0).unwrap();
            s = step(&s, &hier, &w, 0.5).unwrap();
            assert_eq!(s.velocities()[1], Vec3::new(0.5f64.powi(t as i32), 0.0, 0.0));
        }
    }

    #[test]
    fn rejects_large_timestep_and_bad_tags() {
        let hier = Hierarchy::complete(3).unwrap();
        let s = FlockState::new(0, vec![Vec3::ZERO; 3], vec![Vec3::ZERO; 3], Frame::Relative).unwrap();
        let w = WeightMatrix::constant(&hier, 1, 1.0).unwrap();
        assert!(matches!(step(&s, &hier, &w, 0.51), Err(FlockError::StepTooLarge { .. })));
        assert!(matches!(step(&s, &hier, &w, 0.0), Err(FlockError::StepTooLarge { .. })));
        assert!(step(&s, &hier, &w, 0.5).is_ok());
        let late = WeightMatrix::constant(&hier, 2, 1.0).unwrap();
        assert!(matches!(step(&s, &hier, &late, 0.5), Err(FlockError::InvalidWeights(_))));
        let other = Hierarchy::chain(2).unwrap();
        let w2 = WeightMatrix::constant(&other, 1, 1.0).unwrap();
        assert!(matches!(step(&s, &other, &w2, 0.5), Err(FlockError::DimensionMismatch(_))));
    }

    #[test]
    fn relative_conversion() {
        let s = FlockState::new(
            0,
            vec![Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 1.0, 1.0)],
            vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 0.0)],
            Frame::Absolute,
        )
        .unwrap();
        let r = to_relative(&s).unwrap();
        assert_eq!(r.positions(), &[Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)]);
        assert_eq!(r.velocities(), &[Vec3::ZERO, Vec3::new(0.0, 2.0, 0.0)]);
        assert_eq!(r.frame(), Frame::Relative);
        assert!(matches!(to_relative(&r), Err(FlockError::FrameMismatch(_))));
    }

    #[test]
    fn coincident_flock_is_zero_in_relative_frame() {
        let p = Vec3::new(3.0, -1.0, 2.0);
        let u = Vec3::new(0.5, 0.5, -0.5);
        let s = FlockState::new(7, vec![p; 4], vec![u; 4], Frame::Absolute).unwrap();
        let r = to_relative(&s).unwrap();
        assert!(r.positions().iter().chain(r.velocities()).all(Vec3::is_zero));
        assert_eq!(r.t(), 7);
    }

    #[test]
    fn monitor_flags_growth() {
        let s = two_bird(Vec3::new(1.0, 0.0, 0.0), Frame::Relative);
        let mut mon = PathwiseMonitor::new(&s, 0.5).unwrap();
        let faster = FlockState::new(1, vec![Vec3::ZERO, Vec3::new(1.5, 0.0, 0.0)], vec![Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0)], Frame::Relative).unwrap();
        assert!(matches!(mon.check(&faster), Err(FlockError::InvariantBreach(_))));
    }
}
