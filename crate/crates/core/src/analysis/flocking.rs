//! Empirical flocking detection on a finite relative-frame trajectory.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{FlockError, Result};
use crate::simulation::Trajectory;
use crate::state::{FlockState, Frame};
use crate::vec3::{sup_norm, Vec3};

pub const DEFAULT_EPSILON_V: f64 = 1e-6;
pub const DEFAULT_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlockingVerdict {
    pub flocking: bool,
    pub velocities_vanish: bool,
    pub positions_converge: bool,
    /// Estimate of the limit configuration: the last positions seen.
    pub limit_positions: Vec<Vec3>,
    /// First step from which `‖v‖∞ < ε_v` held through the end.
    pub settled_step: Option<u64>,
    pub final_sup_velocity: f64,
}

/// Streaming detector; keeps only the last `window` states.
///
/// Velocities vanish when `‖v[t]‖∞ < ε_v` over the whole window; positions
/// converge when `max_window ‖x[t] - x[T]‖∞ < ε_v · window · h`.
#[derive(Debug, Clone)]
pub struct FlockingMonitor {
    epsilon_v: f64,
    window: usize,
    h: f64,
    recent: VecDeque<(f64, Vec<Vec3>)>,
    settled_since: Option<u64>,
}

impl FlockingMonitor {
    pub fn new(epsilon_v: f64, window: usize, h: f64) -> Result<Self> {
        if !(epsilon_v > 0.0) || window == 0 {
            return Err(FlockError::InvalidParameter(format!(
                "flocking detection needs epsilon_v > 0 and window >= 1 (got {epsilon_v}, {window})"
            )));
        }
        Ok(FlockingMonitor { epsilon_v, window, h, recent: VecDeque::with_capacity(window + 1), settled_since: None })
    }

    pub fn push(&mut self, state: &FlockState) -> Result<()> {
        if state.frame() != Frame::Relative {
            return Err(FlockError::FrameMismatch("flocking detection runs on the relative frame"));
        }
        let sup_v = state.sup_velocity();
        if sup_v < self.epsilon_v {
            self.settled_since.get_or_insert(state.t());
        } else {
            self.settled_since = None;
        }
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back((sup_v, state.positions().to_vec()));
        Ok(())
    }

    pub fn verdict(&self) -> Result<FlockingVerdict> {
        if self.recent.len() < self.window {
            return Err(FlockError::InvalidParameter(format!(
                "trajectory has {} states, shorter than the detection window {}",
                self.recent.len(),
                self.window
            )));
        }
        let (final_sup_velocity, last_x) = self.recent.back().expect("window >= 1");
        let velocities_vanish = self.recent.iter().all(|(s, _)| *s < self.epsilon_v);
        let drift = self
            .recent
            .iter()
            .map(|(_, x)| {
                let diff: Vec<Vec3> = x.iter().zip(last_x).map(|(a, b)| *a - *b).collect();
                sup_norm(&diff)
            })
            .fold(0.0, f64::max);
        let positions_converge = drift < self.epsilon_v * self.window as f64 * self.h;
        Ok(FlockingVerdict {
            flocking: velocities_vanish && positions_converge,
            velocities_vanish,
            positions_converge,
            limit_positions: last_x.clone(),
            settled_step: self.settled_since,
            final_sup_velocity: *final_sup_velocity,
        })
    }
}

pub fn detect_flocking(traj: &Trajectory, epsilon_v: f64, window: usize) -> Result<FlockingVerdict> {
    let mut mon = FlockingMonitor::new(epsilon_v, window, traj.h)?;
    for s in &traj.states {
        mon.push(s)?;
    }
    mon.verdict()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(states: Vec<FlockState>, h: f64) -> Trajectory {
        Trajectory { h, states, weights: vec![] }
    }

    fn rel(t: u64, x2: Vec3, v2: Vec3) -> FlockState {
        FlockState::new(t, vec![Vec3::ZERO, x2], vec![Vec3::ZERO, v2], Frame::Relative).unwrap()
    }

    #[test]
    fn zero_state_flocks_at_origin() {
        let states = (0..60).map(|t| rel(t, Vec3::ZERO, Vec3::ZERO)).collect();
        let v = detect_flocking(&traj(states, 0.5), 1e-6, 50).unwrap();
        assert!(v.flocking);
        assert_eq!(v.limit_positions, vec![Vec3::ZERO; 2]);
        assert_eq!(v.settled_step, Some(0));
    }

    #[test]
    fn constant_velocity_does_not_flock() {
        let u = Vec3::new(0.1, 0.0, 0.0);
        let states = (0..60).map(|t| rel(t, (0.5 * t as f64) * u, u)).collect();
        let v = detect_flocking(&traj(states, 0.5), 1e-6, 50).unwrap();
        assert!(!v.flocking && !v.velocities_vanish && !v.positions_converge);
        assert_eq!(v.settled_step, None);
    }

    #[test]
    fn short_trajectory_is_an_error() {
        let states = (0..10).map(|t| rel(t, Vec3::ZERO, Vec3::ZERO)).collect();
        assert!(detect_flocking(&traj(states, 0.5), 1e-6, 50).is_err());
        assert!(FlockingMonitor::new(0.0, 5, 0.1).is_err());
        assert!(FlockingMonitor::new(1e-6, 0, 0.1).is_err());
    }

    #[test]
    fn settled_step_resets_on_excursion() {
        let tiny = Vec3::new(1e-9, 0.0, 0.0);
        let big = Vec3::new(1.0, 0.0, 0.0);
        let mut states: Vec<FlockState> = (0..5).map(|t| rel(t, Vec3::ZERO, tiny)).collect();
        states.push(rel(5, Vec3::ZERO, big));
        states.extend((6..10).map(|t| rel(t, Vec3::ZERO, tiny)));
        let v = detect_flocking(&traj(states, 0.5), 1e-6, 3).unwrap();
        assert_eq!(v.settled_step, Some(6));
        assert!(v.velocities_vanish);
    }
}
