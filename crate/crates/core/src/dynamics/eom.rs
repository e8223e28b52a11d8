use nalgebra::{Matrix3, Vector3};

use super::{forces_moments_vec, ControlInput, HybridMode, PlanarState, VehicleParams};
use crate::linalg::{rot, Vec2, Vec7};

/// Rigid-body plus added-mass inertia over `(v_x, v_z, omega_y)`.
pub fn total_inertia(mode: HybridMode, params: &VehicleParams) -> Matrix3<f64> {
    let added = params.added_mass.for_mode(mode);
    Matrix3::from_diagonal(&Vector3::new(params.mass, params.mass, params.inertia_yy))
        + Matrix3::from_fn(|i, j| added[i][j])
}

/// Time derivative of the state vector `(r_x, r_z, theta, delta, v_x, v_z, omega_y)`.
///
/// Body momenta obey Kirchhoff's equations in the rotating frame: the
/// generalized momentum `p = (M + M_a) chi` is rotated by the pitch rate and the
/// added-mass momentum couples into the pitching moment (Munk moment).
pub fn dynamics(x: &Vec7, u: &Vec2, mode: HybridMode, params: &VehicleParams) -> Vec7 {
    let chi = Vector3::new(x[4], x[5], x[6]);
    let m_total = total_inertia(mode, params);
    let added = params.added_mass.for_mode(mode);
    let m_added = Matrix3::from_fn(|i, j| added[i][j]);
    let p = m_total * chi;
    let pa = m_added * chi;
    let w = x[6];
    let coriolis = Vector3::new(-w * p.y, w * p.x, x[4] * pa.y - x[5] * pa.x);

    let wrench = forces_moments_vec(x, u[1], mode, params);
    let rhs = Vector3::new(wrench.force.x, wrench.force.y, wrench.moment) - coriolis;
    let chi_dot = m_total
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| Vector3::repeat(f64::NAN));

    let r_dot = rot(x[2]) * Vec2::new(x[4], x[5]);
    Vec7::from([r_dot.x, r_dot.y, x[6], u[0], chi_dot.x, chi_dot.y, chi_dot.z])
}

/// Typed wrapper around [`dynamics`].
pub fn dynamics_f(x: &PlanarState, u: &ControlInput, mode: HybridMode, params: &VehicleParams) -> Vec7 {
    dynamics(&x.to_vector(), &u.to_vector(), mode, params)
}
