use serde::{Deserialize, Serialize};

use crate::error::{FlockError, Result};
use crate::vec3::{sup_norm, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Absolute,
    /// Bird 1 at the origin; velocities measured against bird 1's constant velocity.
    Relative,
}

/// Positions and velocities of all birds at step `t`.
///
/// Immutable once built: `step` returns a fresh snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FlockState {
    t: u64,
    x: Vec<Vec3>,
    v: Vec<Vec3>,
    frame: Frame,
}

impl FlockState {
    pub fn new(t: u64, x: Vec<Vec3>, v: Vec<Vec3>, frame: Frame) -> Result<Self> {
        if x.len() != v.len() {
            return Err(FlockError::DimensionMismatch(format!(
                "{} positions but {} velocities",
                x.len(),
                v.len()
            )));
        }
        if x.len() < 2 {
            return Err(FlockError::TooFewBirds(x.len()));
        }
        if !x.iter().all(Vec3::is_finite) {
            return Err(FlockError::NonFinite("positions"));
        }
        if !v.iter().all(Vec3::is_finite) {
            return Err(FlockError::NonFinite("velocities"));
        }
        if frame == Frame::Relative && !(x[0].is_zero() && v[0].is_zero()) {
            return Err(FlockError::FrameMismatch(
                "relative frame requires bird 1 at the origin with zero velocity",
            ));
        }
        Ok(FlockState { t, x, v, frame })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.x
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.v
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn sup_position(&self) -> f64 {
        sup_norm(&self.x)
    }

    pub fn sup_velocity(&self) -> f64 {
        sup_norm(&self.v)
    }

    /// Largest pairwise distance `max_{i,j} ‖x_i - x_j‖`.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.x.iter().enumerate() {
            for b in &self.x[i + 1..] {
                d = d.max(a.distance(b));
            }
        }
        d
    }

    /// Construction path for `step`, which has already checked every invariant.
    pub(crate) fn from_parts_unchecked(t: u64, x: Vec<Vec3>, v: Vec<Vec3>, frame: Frame) -> Self {
        FlockState { t, x, v, frame }
    }
}
