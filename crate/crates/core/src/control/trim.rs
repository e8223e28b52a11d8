//! Trim conditions for the guard-attracting controllers.

use nalgebra::{Matrix3, Vector3};

use crate::dynamics::{dynamics, HybridMode, VehicleParams};
use crate::linalg::{Vec2, Vec7};

/// A state/input pair at which the position-free dynamics vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimCondition {
    pub mode: HybridMode,
    pub x_trim: Vec7,
    pub u_trim: Vec2,
    /// Norm of the reduced-state derivative at the trim point.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimOptions {
    pub tol: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
    /// Elevon deflection limit in radians.
    pub elevon_max: f64,
}

impl Default for TrimOptions {
    fn default() -> Self {
        TrimOptions { tol: 1e-3, thrust_min: 0.0, thrust_max: 5.0, elevon_max: std::f64::consts::FRAC_PI_2 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("no trim for {mode} at pitch {pitch:.3} rad and speed {speed:.3} m/s (best residual {residual:.3e})")]
pub struct TrimError {
    pub mode: HybridMode,
    pub pitch: f64,
    pub speed: f64,
    pub residual: f64,
    /// Best point found, useful for diagnostics.
    pub best: TrimCondition,
}

/// Reduced-state derivative `(theta', delta', v_x', v_z', omega')`.
pub fn reduced_residual(x: &Vec7, u: &Vec2, mode: HybridMode, params: &VehicleParams) -> f64 {
    let f = dynamics(x, u, mode, params);
    f.rows(2, 5).norm()
}

/// Finds elevon angle, thrust and angle of attack that hold the guard pitch and
/// speed in steady motion. Positions are copied from `x_guard` and do not
/// influence the result.
pub fn compute_trim(
    x_guard: &Vec7,
    mode: HybridMode,
    params: &VehicleParams,
    opts: &TrimOptions,
) -> Result<TrimCondition, TrimError> {
    let theta = x_guard[2];
    let speed = x_guard[4].hypot(x_guard[5]);
    let build = |p: &Vector3<f64>| -> (Vec7, Vec2) {
        let mut x = *x_guard;
        x[3] = p[0];
        x[4] = speed * p[2].cos();
        x[5] = speed * p[2].sin();
        x[6] = 0.0;
        (x, Vec2::new(0.0, p[1]))
    };
    let residual = |p: &Vector3<f64>| -> Vector3<f64> {
        let (x, u) = build(p);
        let f = dynamics(&x, &u, mode, params);
        Vector3::new(f[4], f[5], f[6])
    };
    let clamp = |p: &mut Vector3<f64>| {
        p[0] = p[0].clamp(-opts.elevon_max, opts.elevon_max);
        p[1] = p[1].clamp(opts.thrust_min, opts.thrust_max);
    };

    let alpha_guard = x_guard[5].atan2(x_guard[4]);
    let thrust_mid = 0.5 * (opts.thrust_min + opts.thrust_max);
    let mut starts = Vec::new();
    for &alpha in &[alpha_guard, 0.0, 0.3, -0.3] {
        for &delta in &[x_guard[3], 0.0] {
            for &thrust in &[opts.thrust_min, thrust_mid] {
                starts.push(Vector3::new(delta, thrust, alpha));
            }
        }
    }

    let mut best: Option<(f64, Vector3<f64>)> = None;
    for start in starts {
        let mut p = start;
        clamp(&mut p);
        let mut r = residual(&p);
        let mut lambda = 1e-3;
        for _ in 0..200 {
            if !r.iter().all(|v| v.is_finite()) || r.norm() < 1e-12 {
                break;
            }
            let mut jac = Matrix3::zeros();
            for c in 0..3 {
                let h = 1e-6 * p[c].abs().max(1.0);
                let mut pp = p;
                let mut pm = p;
                pp[c] += h;
                pm[c] -= h;
                jac.set_column(c, &((residual(&pp) - residual(&pm)) / (2.0 * h)));
            }
            let jtj = jac.transpose() * jac;
            let g = jac.transpose() * r;
            let mut improved = false;
            for _ in 0..20 {
                let damped = jtj + Matrix3::from_diagonal(&(jtj.diagonal() * lambda)) + Matrix3::identity() * (1e-12 + 1e-3 * lambda);
                let Some(step) = damped.lu().solve(&(-g)) else { break };
                let mut trial = p + step;
                clamp(&mut trial);
                let rt = residual(&trial);
                if rt.iter().all(|v| v.is_finite()) && rt.norm() < r.norm() {
                    p = trial;
                    r = rt;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        let n = r.norm();
        if n.is_finite() && best.as_ref().is_none_or(|(b, _)| n < *b) {
            best = Some((n, p));
        }
    }

    let (_, p) = best.unwrap_or((f64::INFINITY, Vector3::new(x_guard[3], opts.thrust_min, alpha_guard)));
    let (x_trim, u_trim) = build(&p);
    let res = reduced_residual(&x_trim, &u_trim, mode, params);
    let trim = TrimCondition { mode, x_trim, u_trim, residual: res };
    if res.is_finite() && res <= opts.tol {
        Ok(trim)
    } else {
        Err(TrimError { mode, pitch: theta, speed, residual: res, best: trim })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gravity_rest_is_trimmed_by_zero_input() {
        let params = VehicleParams { gravity: 0.0, ..Default::default() };
        let x = Vec7::zeros();
        let t = compute_trim(&x, HybridMode::Air, &params, &TrimOptions::default()).unwrap();
        assert!(t.u_trim.norm() < 1e-9);
        assert!(t.residual < 1e-9);
    }

    #[test]
    fn residual_ignores_positions() {
        let params = VehicleParams::default();
        let mut x = Vec7::zeros();
        x[2] = 0.7;
        x[4] = 4.0;
        let a = compute_trim(&x, HybridMode::Air, &params, &TrimOptions::default());
        x[0] = 12.0;
        x[1] = 3.0;
        let b = compute_trim(&x, HybridMode::Air, &params, &TrimOptions::default());
        let (ta, tb) = match (a, b) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(a), Err(b)) => (a.best, b.best),
            _ => panic!("trim existence depends on position"),
        };
        assert!((ta.u_trim - tb.u_trim).norm() < 1e-12);
        assert!((ta.residual - tb.residual).abs() < 1e-12);
    }
}
