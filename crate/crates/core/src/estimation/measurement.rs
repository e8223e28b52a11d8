//! Mode-specific measurement models and the propeller velocity pseudo-measurement.

use nalgebra::{DMatrix, DVector};

use super::ekf::EstimatorState;
use crate::dynamics::{HybridMode, VehicleParams};
use crate::linalg::Vec2;

/// Water channels: signed hydrostatic pressure `rho_w g r_z` and body-frame velocity.
pub fn measurement_water(est: &EstimatorState, params: &VehicleParams) -> (f64, Vec2) {
    (params.rho_water * params.gravity * est.mean[1], est.body_velocity())
}

/// Transition channels: signed pressure and the attitude-projected depth `cos(theta) r_z`.
pub fn measurement_transition(est: &EstimatorState, params: &VehicleParams) -> (f64, f64) {
    (params.rho_water * params.gravity * est.mean[1], est.theta.cos() * est.mean[1])
}

/// Air channels: altitude, horizontal position and the attitude-projected depth.
pub fn measurement_air(est: &EstimatorState) -> (f64, f64, f64) {
    (est.mean[1], est.mean[0], est.theta.cos() * est.mean[1])
}

/// Predicted channels and their Jacobian for the filter of `mode`.
/// The entry mode shares the transition model.
pub fn measurement_model(est: &EstimatorState, mode: HybridMode, params: &VehicleParams) -> (DVector<f64>, DMatrix<f64>) {
    let rg = params.rho_water * params.gravity;
    let (s, c) = est.theta.sin_cos();
    match mode {
        HybridMode::Water => {
            let (p, vb) = measurement_water(est, params);
            let jac = DMatrix::from_row_slice(
                3,
                6,
                &[0.0, rg, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, c, s, 0.0, 0.0, 0.0, 0.0, -s, c, 0.0, 0.0],
            );
            (DVector::from_row_slice(&[p, vb.x, vb.y]), jac)
        }
        HybridMode::TransitionExit | HybridMode::TransitionEntry => {
            let (p, d) = measurement_transition(est, params);
            let jac = DMatrix::from_row_slice(2, 6, &[0.0, rg, 0.0, 0.0, 0.0, 0.0, 0.0, c, 0.0, 0.0, 0.0, 0.0]);
            (DVector::from_row_slice(&[p, d]), jac)
        }
        HybridMode::Air => {
            let (alt, horiz, d) = measurement_air(est);
            let jac = DMatrix::from_row_slice(
                3,
                6,
                &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, c, 0.0, 0.0, 0.0, 0.0],
            );
            (DVector::from_row_slice(&[alt, horiz, d]), jac)
        }
    }
}

/// Body-x speed implied by the propeller turning without slip: `pitch * omega_p`.
pub fn prop_velocity(omega_p: f64, pitch: f64) -> f64 {
    pitch * omega_p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::Mat6;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn est(r: [f64; 2], v: [f64; 2], theta: f64) -> EstimatorState {
        EstimatorState::new(Vec2::from(r), Vec2::from(v), theta, Mat6::identity())
    }

    #[test]
    fn water_channels() {
        let p = VehicleParams::default();
        assert_relative_eq!(measurement_water(&est([0.0, -1.0], [0.0, 0.0], 0.0), &p).0, -9810.0, epsilon = 1e-9);
        let vb = measurement_water(&est([0.0, 0.0], [2.0, 0.0], 0.0), &p).1;
        assert_relative_eq!((vb - Vec2::new(2.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let vb = measurement_water(&est([0.0, 0.0], [0.0, 2.0], FRAC_PI_2), &p).1;
        assert_relative_eq!((vb - Vec2::new(2.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn transition_channels() {
        let p = VehicleParams::default();
        assert_relative_eq!(measurement_transition(&est([0.0, -0.2], [0.0; 2], 0.0), &p).1, -0.2);
        assert_relative_eq!(measurement_transition(&est([0.0, -3.0], [0.0; 2], FRAC_PI_2), &p).1, 0.0, epsilon = 1e-15);
        assert_relative_eq!(measurement_transition(&est([0.0, -0.4], [0.0; 2], 60f64.to_radians()), &p).1, -0.2, epsilon = 1e-15);
    }

    #[test]
    fn air_channels() {
        assert_eq!(measurement_air(&est([0.5, 1.0], [0.0; 2], 0.0)), (1.0, 0.5, 1.0));
        assert_eq!(measurement_air(&est([0.0, 0.0], [0.0; 2], 0.0)), (0.0, 0.0, 0.0));
        assert!(measurement_air(&est([0.0, 2.0], [0.0; 2], FRAC_PI_2)).2.abs() < 1e-15);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let p = VehicleParams::default();
        let base = est([0.3, -0.4], [1.2, -0.3], 0.6);
        for mode in [HybridMode::Water, HybridMode::TransitionExit, HybridMode::Air] {
            let (h0, jac) = measurement_model(&base, mode, &p);
            for c in 0..6 {
                let mut e = base;
                e.mean[c] += 1e-6;
                let (h1, _) = measurement_model(&e, mode, &p);
                for r in 0..h0.len() {
                    let fd = (h1[r] - h0[r]) / 1e-6;
                    assert!((fd - jac[(r, c)]).abs() <= 1e-4 * jac[(r, c)].abs().max(1.0), "{mode} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn prop_velocity_is_linear() {
        assert_eq!(prop_velocity(0.0, 0.1016), 0.0);
        assert_relative_eq!(prop_velocity(10.0, 0.1016), 1.016, epsilon = 1e-12);
        assert_relative_eq!(prop_velocity(26.0, 0.1016), 2.0 * prop_velocity(13.0, 0.1016), epsilon = 1e-12);
    }
}
