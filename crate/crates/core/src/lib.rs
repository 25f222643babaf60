//! Discrete-time Cucker–Smale flocking under hierarchical leadership with
//! random interactions.
//!
//! * [`dynamics`]: the one-step update, change of frame, pathwise checks.
//! * [`interactions`]: weight kernels and the reproducible random streams.
//! * [`analysis`]: bound constants, contraction bounds, condition checks,
//!   flocking detection.
//! * [`ensemble`]: Monte Carlo estimates compared against the bounds.
//! * [`config`] and [`commands`]: the `hlflock` command-line tool.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod hierarchy;
pub mod interactions;
pub mod output;
pub mod rng;
pub mod simulation;
pub mod state;
pub mod vec3;
pub mod weights;

pub use dynamics::{step, to_relative};
pub use error::{FlockError, Result};
pub use hierarchy::{validate_hierarchy, Hierarchy, HierarchyViolation};
pub use interactions::{cs_weight, power_bound, sample_weights, Certificate, InteractionKind, InteractionModel};
pub use rng::RngStream;
pub use simulation::{simulate, InitialCondition, Scenario, Simulation, Trajectory};
pub use state::{FlockState, Frame};
pub use vec3::{sup_norm, Vec3};
pub use weights::WeightMatrix;
