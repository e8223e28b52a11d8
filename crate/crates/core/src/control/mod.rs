//! Trajectory-tracking feedback: TVLQR gains, guard trims and the hybrid controller automaton.

mod gains;
mod policy;
mod riccati;
mod trim;

pub use gains::{
    guard_gain, guard_trim_for_phase, synthesize_gains, GainError, GainOptions, GainSchedule, LqrWeights, PhaseGains,
    GAINS_FORMAT,
};
pub use policy::{
    hybrid_policy, trim_policy, tvlqr_policy, ControlMode, ControllerState, PolicyEvent, PolicyOptions, PolicyStep,
};
pub use riccati::{lqr_infinite, riccati_backward, RiccatiError, RiccatiSolution};
pub use trim::{compute_trim, reduced_residual, TrimCondition, TrimError, TrimOptions};
