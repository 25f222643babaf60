//! Trajectory integration: sample weights from the current state, step,
//! then run the pathwise checks.

use crate::dynamics::{check_timestep, step, to_relative, PathwiseMonitor};
use crate::error::{FlockError, Result};
use crate::hierarchy::Hierarchy;
use crate::interactions::{sample_weights, InteractionModel};
use crate::rng::{RngStream, INIT_STEP};
use crate::state::{FlockState, Frame};
use crate::vec3::Vec3;
use crate::weights::WeightMatrix;

/// How the state at `t = 0` is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Absolute positions and velocities, bird 1 first.
    Explicit { positions: Vec<Vec3>, velocities: Vec<Vec3> },
    /// Bird 1 at rest at the origin; the other birds uniform in the cube
    /// `[0, box_side]³` with velocities uniform in the ball of radius `speed`.
    /// Drawn from the replica's stream at `t = 0`.
    Sampled { box_side: f64, speed: f64 },
}

impl InitialCondition {
    pub fn state(&self, k: usize, rng: &RngStream, frame: Frame) -> Result<FlockState> {
        match self {
            InitialCondition::Explicit { positions, velocities } => {
                if positions.len() != k {
                    return Err(FlockError::DimensionMismatch(format!(
                        "{} initial positions for k = {k}",
                        positions.len()
                    )));
                }
                let abs = FlockState::new(0, positions.clone(), velocities.clone(), Frame::Absolute)?;
                match frame {
                    Frame::Absolute => Ok(abs),
                    Frame::Relative => to_relative(&abs),
                }
            }
            &InitialCondition::Sampled { box_side, speed } => {
                if !(box_side >= 0.0 && box_side.is_finite() && speed >= 0.0 && speed.is_finite()) {
                    return Err(FlockError::InvalidParameter(format!(
                        "sampled initial conditions need finite box_side, speed >= 0 (got {box_side}, {speed})"
                    )));
                }
                let mut x = vec![Vec3::ZERO];
                let mut v = vec![Vec3::ZERO];
                for bird in 2..=k as u64 {
                    let u = |lane| rng.uniform(INIT_STEP, bird, 0, lane);
                    x.push(box_side * Vec3::new(u(0), u(1), u(2)));
                    v.push(speed * unit_ball_point(|lane| u(3 + lane)));
                }
                FlockState::new(0, x, v, frame)
            }
        }
    }
}

/// Rejection sampling from the unit ball, consuming lanes 0, 1, 2, 3, ...
fn unit_ball_point(u: impl Fn(u64) -> f64) -> Vec3 {
    for attempt in 0.. {
        let c = Vec3::new(
            2.0 * u(3 * attempt) - 1.0,
            2.0 * u(3 * attempt + 1) - 1.0,
            2.0 * u(3 * attempt + 2) - 1.0,
        );
        if c.norm() <= 1.0 {
            return c;
        }
    }
    unreachable!()
}

/// Everything but the random stream that defines a run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub hierarchy: Hierarchy,
    pub model: InteractionModel,
    pub h: f64,
    pub initial: InitialCondition,
}

impl Scenario {
    pub fn new(hierarchy: Hierarchy, model: InteractionModel, h: f64, initial: InitialCondition) -> Result<Self> {
        check_timestep(h, hierarchy.k())?;
        Ok(Scenario { hierarchy, model, h, initial })
    }

    pub fn k(&self) -> usize {
        self.hierarchy.k()
    }

    pub fn initial_state(&self, rng: &RngStream, frame: Frame) -> Result<FlockState> {
        self.initial.state(self.k(), rng, frame)
    }
}

/// A running trajectory with pathwise checks after every step.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    rng: RngStream,
    state: FlockState,
    monitor: PathwiseMonitor,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario, rng: RngStream, frame: Frame) -> Result<Self> {
        let state = scenario.initial_state(&rng, frame)?;
        Self::from_state(scenario, rng, state)
    }

    pub fn from_state(scenario: &'a Scenario, rng: RngStream, state: FlockState) -> Result<Self> {
        let monitor = PathwiseMonitor::new(&state, scenario.h)?;
        Ok(Simulation { scenario, rng, state, monitor })
    }

    pub fn state(&self) -> &FlockState {
        &self.state
    }

    /// Advance one step and return the weights that were applied.
    pub fn advance(&mut self) -> Result<WeightMatrix> {
        let sc = self.scenario;
        let weights = sample_weights(&sc.model, &self.state, &sc.hierarchy, &self.rng)?;
        let next = step(&self.state, &sc.hierarchy, &weights, sc.h)?;
        self.monitor.check(&next)?;
        self.state = next;
        Ok(weights)
    }
}

/// Stored trajectory: `states[t]` for `t = 0..=T` and `weights[t - 1]` applied at step `t`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub h: f64,
    pub states: Vec<FlockState>,
    pub weights: Vec<WeightMatrix>,
}

impl Trajectory {
    pub fn last(&self) -> &FlockState {
        self.states.last().expect("trajectory holds the initial state")
    }
}

pub fn simulate(scenario: &Scenario, rng: RngStream, frame: Frame, horizon: u64) -> Result<Trajectory> {
    let mut sim = Simulation::new(scenario, rng, frame)?;
    let mut states = Vec::with_capacity(horizon as usize + 1);
    let mut weights = Vec::with_capacity(horizon as usize);
    states.push(sim.state().clone());
    for _ in 0..horizon {
        weights.push(sim.advance()?);
        states.push(sim.state().clone());
    }
    Ok(Trajectory { h: scenario.h, states, weights })
}
