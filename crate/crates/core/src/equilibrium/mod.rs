//! Mean-field equilibrium: optimal control against a fixed field, the
//! stationary occupancy of a control, the damped fixed point of the two,
//! the representative-good linear system and independent verification.

mod control;
mod fixed_point;
mod omega;
mod stationary;
mod verify;

pub use control::{optimal_control, optimal_control_with_floor, DEFAULT_OCCUPANCY_FLOOR};
pub use fixed_point::{fixed_point, stationarity_residual, EquilibriumResult, FixedPointConfig};
pub use omega::{
    build_omega, existence_check, representative_solve, ExistenceConfig, ExistenceReport, OmegaSystem,
    RepresentativeSolution, Verdict,
};
pub use stationary::{stationary_distribution, stationary_distribution_with, DEFAULT_RANK_TOLERANCE};
pub use verify::{max_projected_gradient, verify_equilibrium, verify_parts, VerificationReport, VerifyConfig};
