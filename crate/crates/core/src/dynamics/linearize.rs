use super::{dynamics, HybridMode, VehicleParams};
use crate::linalg::{Mat7, Mat7x2, Vec2, Vec7};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("dynamics not finite at the linearization point (mode {mode})")]
pub struct LinearizeError {
    pub mode: HybridMode,
}

const REL_STEP: f64 = 1e-6;

/// Central-difference Jacobians `(A, B)` of the dynamics, step scaled per component.
pub fn linearize(
    x: &Vec7,
    u: &Vec2,
    mode: HybridMode,
    params: &VehicleParams,
) -> Result<(Mat7, Mat7x2), LinearizeError> {
    let f0 = dynamics(x, u, mode, params);
    if !f0.iter().all(|v| v.is_finite()) {
        return Err(LinearizeError { mode });
    }
    let mut a = Mat7::zeros();
    for j in 0..7 {
        let h = REL_STEP * x[j].abs().max(1.0);
        let (mut xp, mut xm) = (*x, *x);
        xp[j] += h;
        xm[j] -= h;
        let col = (dynamics(&xp, u, mode, params) - dynamics(&xm, u, mode, params)) / (xp[j] - xm[j]);
        a.set_column(j, &col);
    }
    let mut b = Mat7x2::zeros();
    for j in 0..2 {
        let h = REL_STEP * u[j].abs().max(1.0);
        let (mut up, mut um) = (*u, *u);
        up[j] += h;
        um[j] -= h;
        let col = (dynamics(x, &up, mode, params) - dynamics(x, &um, mode, params)) / (up[j] - um[j]);
        b.set_column(j, &col);
    }
    if a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        Ok((a, b))
    } else {
        Err(LinearizeError { mode })
    }
}
