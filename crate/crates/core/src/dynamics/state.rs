use serde::{Deserialize, Serialize};

use crate::linalg::{wrap_angle, Vec2, Vec7};

/// Longitudinal vehicle state. Positions are world frame with `z` up and the
/// free surface at `z = 0`; velocities are body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarState {
    pub r_x: f64,
    pub r_z: f64,
    pub theta: f64,
    pub delta: f64,
    pub v_x: f64,
    pub v_z: f64,
    pub omega_y: f64,
}

/// Column names in vector order.
pub const STATE_NAMES: [&str; 7] = ["r_x", "r_z", "theta", "delta", "v_x", "v_z", "omega_y"];
pub const INPUT_NAMES: [&str; 2] = ["delta_dot", "thrust"];

impl PlanarState {
    pub fn to_vector(&self) -> Vec7 {
        Vec7::from([self.r_x, self.r_z, self.theta, self.delta, self.v_x, self.v_z, self.omega_y])
    }

    pub fn from_vector(v: &Vec7) -> Self {
        PlanarState { r_x: v[0], r_z: v[1], theta: v[2], delta: v[3], v_x: v[4], v_z: v[5], omega_y: v[6] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    /// Same state with pitch wrapped into `(-pi, pi]`.
    pub fn wrapped(&self) -> Self {
        PlanarState { theta: wrap_angle(self.theta), ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Elevon rate, rad/s.
    pub delta_dot: f64,
    /// Propeller thrust along body x, N.
    pub thrust: f64,
}

impl ControlInput {
    pub fn to_vector(&self) -> Vec2 {
        Vec2::new(self.delta_dot, self.thrust)
    }

    pub fn from_vector(v: &Vec2) -> Self {
        ControlInput { delta_dot: v[0], thrust: v[1] }
    }
}
