//! Planar longitudinal hybrid dynamics of the delta-wing vehicle.

mod eom;
mod forces;
mod guards;
mod linearize;
mod mode;
mod params;
mod state;

pub use eom::{dynamics, dynamics_f, total_inertia};
pub use forces::{flat_plate_force, forces_moments_vec, Wrench};
pub use guards::{guard_gradients, guard_psi1, guard_psi2};
pub use linearize::{linearize, LinearizeError};
pub use mode::{
    density_assignment, mode_transition, mode_transition_vec, reset_map, DensityAssignment, HybridMode,
    UnknownMode,
};
pub use params::{AddedMass, PanelGeometry, ParamError, VehicleParams};
pub use state::{ControlInput, PlanarState, INPUT_NAMES, STATE_NAMES};

/// Typed wrapper returning the body force and pitching moment.
pub fn forces_moments(x: &PlanarState, u: &ControlInput, mode: HybridMode, params: &VehicleParams) -> Wrench {
    forces_moments_vec(&x.to_vector(), u.thrust, mode, params)
}
