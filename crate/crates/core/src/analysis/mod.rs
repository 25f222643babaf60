//! Closed-form constants and bounds, condition checks and flocking detection.

pub mod bounds;
pub mod conditions;
pub mod flocking;
pub mod oracle;

pub use bounds::{
    derive_bound_params, lemma2_bound_critical, lemma2_bound_subcritical, second_bird_speed_bound_critical,
    second_bird_speed_bound_subcritical, BirdConstants, BoundError, BoundParams, CriticalBound,
};
pub use conditions::{
    check_corollary2, check_theorem1, condition_table, corollary1_partial_sums, corollary1_series_term,
    corollary2_threshold, gamma_threshold, ConditionRow, SeriesDiagnosis, Theorem1Verdict,
};
pub use flocking::{detect_flocking, FlockingMonitor, FlockingVerdict, DEFAULT_EPSILON_V, DEFAULT_WINDOW};
pub use oracle::two_bird_product_oracle;
