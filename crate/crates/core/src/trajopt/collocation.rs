use nalgebra::{Matrix2, SVector};

use crate::dynamics::{dynamics, HybridMode, VehicleParams};
use crate::linalg::{Vec2, Vec7};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("dynamics not finite on the interval starting at knot {knot}")]
pub struct CollocationError {
    pub knot: usize,
}

/// Simpson defect for an arbitrary vector field `f(x, u)`.
///
/// Returns `x_k - x_k1 + h/6 (f_k + 4 f_c + f_k1)` with the cubic Hermite
/// midpoint `x_c = (x_k + x_k1)/2 + h (f_k - f_k1)/8` and `u_c = (u_k + u_k1)/2`.
pub fn hermite_simpson_defect_with<const N: usize, const M: usize, F>(
    f: F,
    x_k: &SVector<f64, N>,
    x_k1: &SVector<f64, N>,
    u_k: &SVector<f64, M>,
    u_k1: &SVector<f64, M>,
    h: f64,
) -> SVector<f64, N>
where
    F: Fn(&SVector<f64, N>, &SVector<f64, M>) -> SVector<f64, N>,
{
    let f_k = f(x_k, u_k);
    let f_k1 = f(x_k1, u_k1);
    let x_c = (x_k + x_k1) * 0.5 + (f_k - f_k1) * (h / 8.0);
    let u_c = (u_k + u_k1) * 0.5;
    let f_c = f(&x_c, &u_c);
    x_k - x_k1 + (f_k + f_c * 4.0 + f_k1) * (h / 6.0)
}

/// Vehicle defect on one interval of a phase in `mode`.
#[allow(clippy::too_many_arguments)]
pub fn hermite_simpson_defect(
    x_k: &Vec7,
    x_k1: &Vec7,
    u_k: &Vec2,
    u_k1: &Vec2,
    h: f64,
    mode: HybridMode,
    params: &VehicleParams,
    knot: usize,
) -> Result<Vec7, CollocationError> {
    let d = hermite_simpson_defect_with(|x, u| dynamics(x, u, mode, params), x_k, x_k1, u_k, u_k1, h);
    if d.iter().all(|v| v.is_finite()) {
        Ok(d)
    } else {
        Err(CollocationError { knot })
    }
}

/// Running cost `u^T R u h + D h`.
pub fn stage_cost(u: &Vec2, h: f64, r: &Matrix2<f64>, d: f64) -> f64 {
    (u.dot(&(r * u)) + d) * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector1, Vector2};

    #[test]
    fn constant_field_defect_vanishes_on_exact_step() {
        let c = Vector2::new(0.7, -1.3);
        let f = |_: &Vector2<f64>, _: &Vector1<f64>| c;
        let x0 = Vector2::new(1.0, 2.0);
        let u = Vector1::new(0.0);
        let h = 0.2;
        let d = hermite_simpson_defect_with(f, &x0, &(x0 + c * h), &u, &u, h);
        assert!(d.amax() < 1e-15);
        // equal endpoints leave exactly c*h
        let d = hermite_simpson_defect_with(f, &x0, &x0, &u, &u, h);
        assert!((d - c * h).amax() < 1e-15);
    }

    #[test]
    fn exponential_defect_is_fifth_order_small() {
        let f = |x: &Vector1<f64>, _: &Vector1<f64>| *x;
        let h: f64 = 0.1;
        let d = hermite_simpson_defect_with(
            f,
            &Vector1::new(1.0),
            &Vector1::new(h.exp()),
            &Vector1::new(0.0),
            &Vector1::new(0.0),
            h,
        );
        assert!(d.norm() <= 1e-7, "{}", d.norm());
    }

    #[test]
    fn stage_cost_examples() {
        let r = Matrix2::identity();
        assert!((stage_cost(&Vec2::zeros(), 0.1, &r, 1.0) - 0.1).abs() < 1e-15);
        assert!((stage_cost(&Vec2::new(1.0, 2.0), 1.0, &r, 1.0) - 6.0).abs() < 1e-15);
    }

    #[test]
    fn vehicle_defect_reports_bad_knot() {
        let p = VehicleParams::default();
        let mut x = Vec7::zeros();
        x[4] = f64::NAN;
        let err = hermite_simpson_defect(&x, &Vec7::zeros(), &Vec2::zeros(), &Vec2::zeros(), 0.1, HybridMode::Air, &p, 4)
            .unwrap_err();
        assert_eq!(err.knot, 4);
    }
}
