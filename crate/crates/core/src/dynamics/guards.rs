use nalgebra::Vector2;

use super::VehicleParams;
use crate::linalg::{rot, Vec7};

/// Height of the nose above the surface.
pub fn guard_psi1(x: &Vec7, params: &VehicleParams) -> f64 {
    x[1] + x[2].sin() * params.nose_arm()
}

/// Height of the elevon tip above the surface.
pub fn guard_psi2(x: &Vec7, params: &VehicleParams) -> f64 {
    let body = rot(x[2]);
    let hinge = Vector2::new(params.hinge_offset[0], params.hinge_offset[1]);
    let tip = body * hinge + body * rot(x[3]) * Vector2::new(-params.elevon_length, 0.0);
    x[1] + tip.y
}

/// Gradients of `(psi1, psi2)` with respect to the state.
pub fn guard_gradients(x: &Vec7, params: &VehicleParams) -> (Vec7, Vec7) {
    let mut g1 = Vec7::zeros();
    g1[1] = 1.0;
    g1[2] = x[2].cos() * params.nose_arm();

    let (h, l) = (params.hinge_offset, params.elevon_length);
    let (st, ct) = x[2].sin_cos();
    let cd = (x[2] + x[3]).cos();
    // psi2 = r_z + s_t*h_x + c_t*h_z - l*sin(theta+delta)
    let mut g2 = Vec7::zeros();
    g2[1] = 1.0;
    g2[2] = ct * h[0] - st * h[1] - l * cd;
    g2[3] = -l * cd;
    (g1, g2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn fixture() -> VehicleParams {
        VehicleParams {
            wing_length: 0.5,
            cg_offset: 0.2,
            hinge_offset: [-0.2, 0.0],
            elevon_length: 0.05,
            ..Default::default()
        }
    }

    fn x(r_z: f64, theta: f64, delta: f64) -> Vec7 {
        Vec7::from([0.0, r_z, theta, delta, 0.0, 0.0, 0.0])
    }

    #[test]
    fn nose_guard_examples() {
        let p = fixture();
        assert!(guard_psi1(&x(0.0, 0.0, 0.0), &p).abs() < 1e-15);
        assert!((guard_psi1(&x(-1.0, 0.0, 0.0), &p) + 1.0).abs() < 1e-15);
        assert!((guard_psi1(&x(0.0, FRAC_PI_2, 0.0), &p) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn tail_guard_examples() {
        let p = fixture();
        assert!(guard_psi2(&x(0.0, 0.0, 0.0), &p).abs() < 1e-15);
        assert!((guard_psi2(&x(-0.5, 0.0, 0.0), &p) + 0.5).abs() < 1e-15);
        // independent composition: rotate the tip point (-0.25, 0) by 90 degrees
        let tip_z = {
            let (px, pz) = (-0.2 - 0.05, 0.0);
            let (s, c) = (FRAC_PI_2.sin(), FRAC_PI_2.cos());
            s * px + c * pz
        };
        assert!((guard_psi2(&x(0.0, FRAC_PI_2, 0.0), &p) - tip_z).abs() < 1e-15);
        assert!((tip_z + 0.25).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = VehicleParams { hinge_offset: [-0.16, 0.01], ..Default::default() };
        let x0 = Vec7::from([0.3, -0.2, 0.7, -0.4, 1.0, 0.2, 0.1]);
        let (g1, g2) = guard_gradients(&x0, &p);
        for j in 0..7 {
            let mut e = Vec7::zeros();
            e[j] = 1e-6;
            let d1 = (guard_psi1(&(x0 + e), &p) - guard_psi1(&(x0 - e), &p)) / 2e-6;
            let d2 = (guard_psi2(&(x0 + e), &p) - guard_psi2(&(x0 - e), &p)) / 2e-6;
            assert!((d1 - g1[j]).abs() < 1e-8, "psi1 component {j}");
            assert!((d2 - g2[j]).abs() < 1e-8, "psi2 component {j}");
        }
    }
}
