//! Fixed-step RK4 with bisection location of guard crossings.

use crate::dynamics::{dynamics, guard_psi1, guard_psi2, mode_transition_vec, HybridMode, VehicleParams};
use crate::linalg::{Vec2, Vec7};

/// Guard value tolerance at a located crossing, m.
pub const EVENT_TOL: f64 = 1e-6;

/// Mode transitions allowed inside one control period before the run is declared chattering.
pub const MAX_TRANSITIONS_PER_PERIOD: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub t: f64,
    pub from: HybridMode,
    pub to: HybridMode,
    /// Guard that fired: 1 for the nose, 2 for the elevon tip.
    pub guard: u8,
    /// Guard value at the located instant.
    pub psi: f64,
    pub x: Vec7,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("{count} mode transitions within one control period ending at t = {t:.4} s")]
    Chattering { t: f64, count: usize },
    #[error("state became non-finite at t = {t:.4} s")]
    NonFinite { t: f64 },
    #[error("invalid simulation setup: {0}")]
    Setup(String),
}

pub fn rk4_step(x: &Vec7, u: &Vec2, mode: HybridMode, params: &VehicleParams, h: f64) -> Vec7 {
    let k1 = dynamics(x, u, mode, params);
    let k2 = dynamics(&(x + k1 * (0.5 * h)), u, mode, params);
    let k3 = dynamics(&(x + k2 * (0.5 * h)), u, mode, params);
    let k4 = dynamics(&(x + k3 * h), u, mode, params);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn signature_mode(x: &Vec7, params: &VehicleParams) -> HybridMode {
    HybridMode::from_guards(guard_psi1(x, params), guard_psi2(x, params))
}

/// Guard whose sign differs between `from` and `x`, with its value at `x`.
fn fired_guard(from: HybridMode, x: &Vec7, params: &VehicleParams) -> (u8, f64) {
    let (nose, tail) = from.signature();
    let (p1, p2) = (guard_psi1(x, params), guard_psi2(x, params));
    let nose_changed = (p1 >= 0.0) != nose;
    let tail_changed = (p2 >= 0.0) != tail;
    match (nose_changed, tail_changed) {
        (true, false) => (1, p1),
        (false, true) => (2, p2),
        _ if p1.abs() >= p2.abs() => (1, p1),
        _ => (2, p2),
    }
}

/// Advances `(x, q)` by `dt` under constant input. Guard crossings are located by
/// bisection on the step length until the fired guard is within [`EVENT_TOL`] of
/// zero; the mode switches there and integration resumes for the rest of the step.
/// `count` accumulates transitions so callers can detect chattering.
pub fn hybrid_step(
    x: &Vec7,
    q: HybridMode,
    u: &Vec2,
    t: f64,
    dt: f64,
    params: &VehicleParams,
    transitions: &mut Vec<Transition>,
    count: &mut usize,
) -> Result<(Vec7, HybridMode), SimError> {
    let mut x = *x;
    let mut q = q;
    let mut t_cur = t;
    let mut remaining = dt;
    loop {
        let x_end = rk4_step(&x, u, q, params, remaining);
        if !x_end.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite { t: t_cur });
        }
        if signature_mode(&x_end, params) == q {
            return Ok((x_end, q));
        }
        let (mut lo, mut hi, mut x_hi) = (0.0, remaining, x_end);
        for _ in 0..200 {
            if fired_guard(q, &x_hi, params).1.abs() <= EVENT_TOL || hi - lo <= 1e-15 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let x_mid = rk4_step(&x, u, q, params, mid);
            if signature_mode(&x_mid, params) != q {
                hi = mid;
                x_hi = x_mid;
            } else {
                lo = mid;
            }
        }
        let (guard, psi) = fired_guard(q, &x_hi, params);
        let to = mode_transition_vec(&x_hi, q, params);
        transitions.push(Transition { t: t_cur + hi, from: q, to, guard, psi, x: x_hi });
        *count += 1;
        if *count > MAX_TRANSITIONS_PER_PERIOD {
            return Err(SimError::Chattering { t: t_cur + hi, count: *count });
        }
        x = x_hi;
        q = to;
        t_cur += hi;
        remaining -= hi;
        if remaining <= 1e-12 * dt {
            return Ok((x, q));
        }
    }
}

/// Timing of an open-loop or closed-loop integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt_physics: f64,
    pub dt_control: f64,
    pub t_max: f64,
}

impl StepConfig {
    pub fn substeps(&self) -> Result<usize, SimError> {
        if !(self.dt_physics > 0.0 && self.dt_control >= self.dt_physics && self.t_max > 0.0) {
            return Err(SimError::Setup("need 0 < dt_physics <= dt_control and t_max > 0".into()));
        }
        Ok(((self.dt_control / self.dt_physics).round() as usize).max(1))
    }
}

/// Uniformly sampled hybrid trajectory with the located transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrace {
    pub t: Vec<f64>,
    pub x: Vec<Vec7>,
    pub q: Vec<HybridMode>,
    pub u: Vec<Vec2>,
    pub transitions: Vec<Transition>,
}

/// Integrates under `policy`, evaluated at the control rate and held between ticks.
pub fn integrate_hybrid<P>(
    x0: &Vec7,
    q0: HybridMode,
    mut policy: P,
    cfg: &StepConfig,
    params: &VehicleParams,
) -> Result<HybridTrace, SimError>
where
    P: FnMut(f64, &Vec7, HybridMode) -> Vec2,
{
    let sub = cfg.substeps()?;
    if signature_mode(x0, params) != q0 {
        return Err(SimError::Setup(format!("initial state guard signs do not match {q0}")));
    }
    let dt = cfg.dt_control / sub as f64;
    let ticks = (cfg.t_max / cfg.dt_control).round() as usize;
    let mut tr = HybridTrace { t: vec![0.0], x: vec![*x0], q: vec![q0], u: vec![], transitions: vec![] };
    let (mut x, mut q) = (*x0, q0);
    for k in 0..ticks {
        let t_tick = k as f64 * cfg.dt_control;
        let u = policy(t_tick, &x, q);
        let mut count = 0;
        for i in 0..sub {
            let t = t_tick + i as f64 * dt;
            (x, q) = hybrid_step(&x, q, &u, t, dt, params, &mut tr.transitions, &mut count)?;
            tr.t.push(t_tick + (i + 1) as f64 * dt);
            tr.x.push(x);
            tr.q.push(q);
            tr.u.push(u);
        }
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still_air_params() -> VehicleParams {
        // vacuum: a pure projectile
        VehicleParams { rho_air: 0.0, ..Default::default() }
    }

    #[test]
    fn step_without_crossing_matches_rk4() {
        let p = VehicleParams::default();
        let x = Vec7::from([0.0, -1.0, 0.1, 0.0, 0.5, 0.0, 0.0]);
        let mut tr = vec![];
        let mut c = 0;
        let (x1, q1) = hybrid_step(&x, HybridMode::Water, &Vec2::new(0.0, 1.0), 0.0, 1e-3, &p, &mut tr, &mut c).unwrap();
        assert_eq!(q1, HybridMode::Water);
        assert_eq!(x1, rk4_step(&x, &Vec2::new(0.0, 1.0), HybridMode::Water, &p, 1e-3));
        assert!(tr.is_empty());
    }

    #[test]
    fn located_crossings_are_on_the_guard() {
        let p = VehicleParams::default();
        // nose just below the surface, pitched up and moving fast
        let x0 = Vec7::from([0.0, -0.3, 0.6, 0.0, 2.0, 0.0, 0.0]);
        let cfg = StepConfig { dt_physics: 1e-3, dt_control: 1e-2, t_max: 0.5 };
        let tr = integrate_hybrid(&x0, HybridMode::Water, |_, _, _| Vec2::new(0.0, 3.0), &cfg, &p).unwrap();
        assert!(!tr.transitions.is_empty());
        for e in &tr.transitions {
            assert!(e.psi.abs() <= EVENT_TOL, "{e:?}");
            assert!(e.from.is_adjacent(e.to));
        }
        assert_eq!(tr.transitions[0].to, HybridMode::TransitionExit);
    }

    #[test]
    fn ballistic_apex_matches_projectile() {
        let p = still_air_params();
        let vz = 3.0;
        let x0 = Vec7::from([0.0, 2.0, 0.0, 0.0, 0.0, vz, 0.0]);
        let cfg = StepConfig { dt_physics: 1e-3, dt_control: 1e-2, t_max: 0.6 };
        let tr = integrate_hybrid(&x0, HybridMode::Air, |_, _, _| Vec2::zeros(), &cfg, &p).unwrap();
        let apex = tr.x.iter().map(|x| x[1]).fold(f64::NEG_INFINITY, f64::max) - 2.0;
        let expect = vz * vz / (2.0 * p.gravity);
        assert!((apex - expect).abs() <= 1e-3 * expect, "apex {apex} vs {expect}");
    }

    #[test]
    fn mismatched_initial_mode_is_rejected() {
        let p = VehicleParams::default();
        let cfg = StepConfig { dt_physics: 1e-3, dt_control: 1e-2, t_max: 0.1 };
        let x0 = Vec7::from([0.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let r = integrate_hybrid(&x0, HybridMode::Air, |_, _, _| Vec2::zeros(), &cfg, &p);
        assert!(matches!(r, Err(SimError::Setup(_))));
    }
}
