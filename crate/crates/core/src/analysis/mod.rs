//! Closed-loop analysis of a single vehicle and of the platoon.

pub mod chain;
pub mod linear;
pub mod robust;
pub mod tuning;

pub use chain::leader_chain_positivity;
pub use linear::{
    delay_measure, external_positivity_check, frozen_stability_grid, FrozenPoint, LinearLoop,
    LoopVariant,
};
pub use robust::{export_robust_model, robust_model, RobustModel};
pub use tuning::{tune, tune_kp, GridPolicy, OperatingPoint, TuningProblem};

/// Largest `k_p` keeping every reachable operating point externally positive.
pub const TUNED_KP: f64 = 0.75;
