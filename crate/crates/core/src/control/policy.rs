//! Tracking law and the hybrid controller automaton.

use std::fmt;

use super::gains::GainSchedule;
use crate::dynamics::HybridMode;
use crate::linalg::{wrap_angle, Mat2x7, Vec2, Vec7};
use crate::trajopt::NominalTrajectory;

/// Discrete controller mode: tracking the nominal phase or holding the guard-attracting trim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    TimeVarying(HybridMode),
    TimeInvariant(HybridMode),
}

impl ControlMode {
    pub fn mode(&self) -> HybridMode {
        match *self {
            ControlMode::TimeVarying(q) | ControlMode::TimeInvariant(q) => q,
        }
    }

    pub fn is_time_varying(&self) -> bool {
        matches!(self, ControlMode::TimeVarying(_))
    }
}

impl fmt::Display for ControlMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlMode::TimeVarying(q) => write!(f, "tv:{}", q.name()),
            ControlMode::TimeInvariant(q) => write!(f, "ti:{}", q.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerState {
    pub m: ControlMode,
    /// Phase time, frozen while time-invariant.
    pub tau: f64,
}

impl ControllerState {
    /// Tracking the first phase of the schedule from `tau = 0`.
    pub fn initial(traj: &NominalTrajectory) -> Self {
        ControllerState { m: ControlMode::TimeVarying(traj.phases[0].mode), tau: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOptions {
    /// Control period, s.
    pub dt: f64,
    /// When false the automaton has no guard-attracting nodes: once a tracking phase
    /// times out the controller stops, commanding zero input and ignoring later mode changes.
    pub fallback: bool,
    /// Regulate to the trim of the last scheduled mode as soon as it is entered
    /// instead of tracking its nominal phase first.
    pub hold_final: bool,
}

impl Default for PolicyOptions {
    fn default() -> Self {
        PolicyOptions { dt: 0.01, fallback: true, hold_final: true }
    }
}

/// Discrete events emitted by the automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyEvent {
    /// Tracking phase ran out of nominal time.
    Timeout(HybridMode),
    Advance { from: HybridMode, to: HybridMode },
    Regression { from: HybridMode, to: HybridMode },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStep {
    pub u: Vec2,
    pub next: ControllerState,
    pub saturated: bool,
    pub events: [Option<PolicyEvent>; 2],
}

fn state_error(x: &Vec7, x0: &Vec7) -> Vec7 {
    let mut dx = x - x0;
    dx[2] = wrap_angle(dx[2]);
    dx
}

/// `u = u0(tau) - K(tau) (x - x0(tau))`, saturated to the input bounds.
/// Returns `None` if `mode` is not part of the schedule.
pub fn tvlqr_policy(
    tau: f64,
    x: &Vec7,
    mode: HybridMode,
    gains: &GainSchedule,
    traj: &NominalTrajectory,
) -> Option<(Vec2, bool)> {
    let nominal = traj.sample(tau, mode)?;
    let k = gains.phase(mode)?.gain_at(tau);
    Some(gains.saturate(nominal.u - k * state_error(x, &nominal.x)))
}

/// Guard-attracting law `u = u_trim - K_ti (x - x_trim)` on the position-free states.
pub fn trim_policy(x: &Vec7, mode: HybridMode, gains: &GainSchedule) -> Option<(Vec2, bool)> {
    let p = gains.phase(mode)?;
    let k: &Mat2x7 = &p.guard_gain;
    let mut dx = state_error(x, &p.trim.x_trim);
    dx[0] = 0.0;
    dx[1] = 0.0;
    Some(gains.saturate(p.trim.u_trim - k * dx))
}

/// Advances the controller automaton by one control period.
///
/// Estimated-mode changes are handled first: a later scheduled mode moves tracking to
/// the next phase with `tau = 0` (or straight to the final trim when `hold_final` is set
/// and the next phase is the last), an earlier one holds that mode's trim controller,
/// and a mode outside the schedule leaves the state unchanged. The input is then
/// computed for the resulting controller mode, and tracking times out into the
/// trim controller once `tau` reaches the phase duration. Without the fallback a
/// timed-out controller has no outgoing edges and stays stopped.
pub fn hybrid_policy(
    cs: ControllerState,
    x_est: &Vec7,
    q_est: HybridMode,
    gains: &GainSchedule,
    traj: &NominalTrajectory,
    opts: &PolicyOptions,
) -> PolicyStep {
    let mut events = [None, None];
    let mut cs = cs;
    let current = cs.m.mode();
    let is_final = |q: HybridMode| traj.phase_index(q).is_some_and(|i| i + 1 == traj.phases.len());
    let stopped = !opts.fallback && !cs.m.is_time_varying() && !(opts.hold_final && is_final(current));
    if q_est != current && !stopped {
        if let (Some(i_cur), Some(i_est)) = (traj.phase_index(current), traj.phase_index(q_est)) {
            if i_est > i_cur {
                let to = traj.phases[i_cur + 1].mode;
                let hold = opts.hold_final && i_cur + 2 == traj.phases.len();
                let m = if hold { ControlMode::TimeInvariant(to) } else { ControlMode::TimeVarying(to) };
                cs = ControllerState { m, tau: 0.0 };
                events[0] = Some(PolicyEvent::Advance { from: current, to });
            } else {
                cs = ControllerState { m: ControlMode::TimeInvariant(q_est), tau: traj.phases[i_est].duration() };
                events[0] = Some(PolicyEvent::Regression { from: current, to: q_est });
            }
        }
    }

    let q = cs.m.mode();
    let duration = traj.duration(q).unwrap_or(0.0);
    let tol = 1e-9 * duration.max(1.0);
    if let ControlMode::TimeVarying(_) = cs.m {
        if cs.tau >= duration - tol {
            cs = ControllerState { m: ControlMode::TimeInvariant(q), tau: duration };
            events[1] = Some(PolicyEvent::Timeout(q));
        }
    }

    let (u, saturated, next) = match cs.m {
        ControlMode::TimeVarying(_) => {
            let (u, sat) = tvlqr_policy(cs.tau, x_est, q, gains, traj).unwrap_or((Vec2::zeros(), false));
            let tau = cs.tau + opts.dt;
            let next = if tau >= duration - tol {
                events[1] = Some(PolicyEvent::Timeout(q));
                ControllerState { m: ControlMode::TimeInvariant(q), tau: duration }
            } else {
                ControllerState { m: cs.m, tau }
            };
            (u, sat, next)
        }
        ControlMode::TimeInvariant(_) => {
            let (u, sat) = if opts.fallback || (opts.hold_final && is_final(q)) {
                trim_policy(x_est, q, gains).unwrap_or((Vec2::zeros(), false))
            } else {
                gains.saturate(Vec2::zeros())
            };
            (u, sat, cs)
        }
    };
    PolicyStep { u, next, saturated, events }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{PhaseGains, TrimCondition};
    use crate::dynamics::VehicleParams;
    use crate::linalg::Mat7;
    use crate::trajopt::{TrajMeta, TrajPhase};

    const SCHEDULE: [HybridMode; 3] = [HybridMode::Water, HybridMode::TransitionExit, HybridMode::Air];

    fn fixture(k_scale: f64) -> (NominalTrajectory, GainSchedule) {
        let params = VehicleParams::default();
        let mut phases = Vec::new();
        let mut gains = Vec::new();
        let mut t0 = 0.0;
        for (j, mode) in SCHEDULE.into_iter().enumerate() {
            let h = 0.1 * (j + 1) as f64;
            let states: Vec<Vec7> = (0..5).map(|k| Vec7::from_element(0.1 * (j * 5 + k) as f64)).collect();
            let controls: Vec<Vec2> = (0..5).map(|k| Vec2::new(0.5 * k as f64 - 1.0, 1.0 + 0.2 * k as f64)).collect();
            let ph = TrajPhase::new(mode, h, t0, states, controls, &params);
            t0 += ph.duration();
            gains.push(PhaseGains {
                mode,
                duration: ph.duration(),
                taus: vec![0.0, ph.duration()],
                k: vec![Mat2x7::from_element(k_scale); 2],
                s: vec![Mat7::identity(); 2],
                guard_gain: Mat2x7::from_fn(|_, c| if c < 2 { 0.0 } else { k_scale }),
                trim: TrimCondition { mode, x_trim: Vec7::from_element(0.3), u_trim: Vec2::new(0.0, 2.0), residual: 0.0 },
            });
            phases.push(ph);
        }
        let traj = NominalTrajectory { phases, meta: TrajMeta::default() };
        let gains = GainSchedule { phases: gains, u_lower: Vec2::new(-10.0, 0.0), u_upper: Vec2::new(10.0, 5.0) };
        (traj, gains)
    }

    #[test]
    fn zero_error_reproduces_feedforward() {
        let (traj, gains) = fixture(3.0);
        for tau in [0.0, 0.13, 0.25, 0.4] {
            let nominal = traj.sample(tau, HybridMode::Water).unwrap();
            let (u, sat) = tvlqr_policy(tau, &nominal.x, HybridMode::Water, &gains, &traj).unwrap();
            assert_eq!(u, nominal.u);
            assert!(!sat);
        }
    }

    #[test]
    fn zero_gain_is_open_loop() {
        let (traj, gains) = fixture(0.0);
        let x = Vec7::from_element(-4.0);
        let (u, _) = tvlqr_policy(0.2, &x, HybridMode::Water, &gains, &traj).unwrap();
        assert_eq!(u, traj.sample(0.2, HybridMode::Water).unwrap().u);
    }

    #[test]
    fn feedback_sign_opposes_error() {
        let (traj, gains) = fixture(0.1);
        let nominal = traj.sample(0.2, HybridMode::Water).unwrap();
        let x = nominal.x + Vec7::from_element(0.5);
        let (u, _) = tvlqr_policy(0.2, &x, HybridMode::Water, &gains, &traj).unwrap();
        assert!(u[0] < nominal.u[0] && u[1] < nominal.u[1]);
    }

    #[test]
    fn times_out_into_trim_controller() {
        let (traj, gains) = fixture(1.0);
        let dt = 0.01;
        let dur = traj.duration(HybridMode::Water).unwrap();
        let cs = ControllerState { m: ControlMode::TimeVarying(HybridMode::Water), tau: dur - dt };
        let step = hybrid_policy(cs, &Vec7::zeros(), HybridMode::Water, &gains, &traj, &PolicyOptions { dt, fallback: true, hold_final: true });
        assert_eq!(step.next.m, ControlMode::TimeInvariant(HybridMode::Water));
        assert_eq!(step.next.tau, dur);
        assert_eq!(step.events[1], Some(PolicyEvent::Timeout(HybridMode::Water)));
        let again = hybrid_policy(step.next, &Vec7::zeros(), HybridMode::Water, &gains, &traj, &PolicyOptions { dt, fallback: true, hold_final: true });
        assert_eq!(again.next, step.next);
        let expect = trim_policy(&Vec7::zeros(), HybridMode::Water, &gains).unwrap().0;
        assert_eq!(again.u, expect);
    }

    #[test]
    fn guard_event_resets_tau_from_either_controller() {
        let (traj, gains) = fixture(1.0);
        let opts = PolicyOptions::default();
        for m in [ControlMode::TimeVarying(HybridMode::Water), ControlMode::TimeInvariant(HybridMode::Water)] {
            let cs = ControllerState { m, tau: 0.2 };
            let step = hybrid_policy(cs, &Vec7::zeros(), HybridMode::TransitionExit, &gains, &traj, &opts);
            assert_eq!(step.next.m, ControlMode::TimeVarying(HybridMode::TransitionExit));
            assert!((step.next.tau - opts.dt).abs() < 1e-15);
            let u0 = tvlqr_policy(0.0, &Vec7::zeros(), HybridMode::TransitionExit, &gains, &traj).unwrap().0;
            assert_eq!(step.u, u0);
        }
    }

    #[test]
    fn never_skips_a_scheduled_mode() {
        let (traj, gains) = fixture(1.0);
        let cs = ControllerState::initial(&traj);
        let step = hybrid_policy(cs, &Vec7::zeros(), HybridMode::Air, &gains, &traj, &PolicyOptions::default());
        assert_eq!(step.next.m.mode(), HybridMode::TransitionExit);
        assert_eq!(step.events[0], Some(PolicyEvent::Advance { from: HybridMode::Water, to: HybridMode::TransitionExit }));
    }

    #[test]
    fn regression_holds_earlier_trim_and_unscheduled_mode_is_ignored() {
        let (traj, gains) = fixture(1.0);
        let opts = PolicyOptions::default();
        let cs = ControllerState { m: ControlMode::TimeVarying(HybridMode::Air), tau: 0.3 };
        let step = hybrid_policy(cs, &Vec7::zeros(), HybridMode::Water, &gains, &traj, &opts);
        assert_eq!(step.next.m, ControlMode::TimeInvariant(HybridMode::Water));
        let step = hybrid_policy(cs, &Vec7::zeros(), HybridMode::TransitionEntry, &gains, &traj, &opts);
        assert_eq!(step.next.m, cs.m);
        assert!((step.next.tau - 0.31).abs() < 1e-12);
    }

    #[test]
    fn entering_last_mode_holds_its_trim() {
        let (traj, gains) = fixture(1.0);
        let cs = ControllerState { m: ControlMode::TimeVarying(HybridMode::TransitionExit), tau: 0.1 };
        let x = Vec7::from_element(0.3);
        let held = hybrid_policy(cs, &x, HybridMode::Air, &gains, &traj, &PolicyOptions { fallback: false, ..Default::default() });
        assert_eq!(held.next, ControllerState { m: ControlMode::TimeInvariant(HybridMode::Air), tau: 0.0 });
        assert_eq!(held.u, trim_policy(&x, HybridMode::Air, &gains).unwrap().0);
        let tracked = hybrid_policy(cs, &x, HybridMode::Air, &gains, &traj, &PolicyOptions { hold_final: false, ..Default::default() });
        assert_eq!(tracked.next.m, ControlMode::TimeVarying(HybridMode::Air));
    }

    #[test]
    fn disabled_fallback_stops_the_controller() {
        let (traj, gains) = fixture(1.0);
        let opts = PolicyOptions { fallback: false, ..Default::default() };
        let cs = ControllerState { m: ControlMode::TimeInvariant(HybridMode::Water), tau: 0.4 };
        let step = hybrid_policy(cs, &Vec7::from_element(2.0), HybridMode::Water, &gains, &traj, &opts);
        assert_eq!(step.u, Vec2::zeros());
        let later = hybrid_policy(cs, &Vec7::from_element(2.0), HybridMode::TransitionExit, &gains, &traj, &opts);
        assert_eq!(later.next, cs);
        assert_eq!(later.u, Vec2::zeros());
        assert_eq!(later.events, [None, None]);
    }

    #[test]
    fn outputs_are_saturated() {
        let (traj, gains) = fixture(50.0);
        let (u, sat) = tvlqr_policy(0.1, &Vec7::from_element(9.0), HybridMode::Water, &gains, &traj).unwrap();
        assert!(sat);
        assert!(u[0] >= -10.0 && u[0] <= 10.0 && u[1] >= 0.0 && u[1] <= 5.0);
    }
}
