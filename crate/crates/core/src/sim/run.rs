//! Closed-loop runs: sensors, estimator, controller automaton and event-located physics.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::integrate::{hybrid_step, SimError, StepConfig, Transition};
use super::outcome::{OutcomeLabel, OutcomeRules, OutcomeTracker};
use super::sensors::{PropModel, SensorConfig, SensorModel};
use crate::control::{hybrid_policy, ControlMode, ControllerState, GainSchedule, PolicyEvent, PolicyOptions};
use crate::dynamics::{guard_psi1, guard_psi2, HybridMode, VehicleParams};
use crate::estimation::{EstimatorConfig, HybridEstimator, ModeEvent, ModeSwitch, SensorNoise, SensorPacket};
use crate::linalg::{Vec2, Vec7};
use crate::trajopt::NominalTrajectory;

/// Closed-loop run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_physics: f64,
    pub dt_control: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Multiplies every sensor noise level; 0 gives exact sensors.
    pub noise_scale: f64,
    /// True accelerometer bias in body axes, m/s^2.
    pub accel_bias: [f64; 2],
    /// Drag scaling applied to the simulated vehicle only.
    pub drag_multiplier: f64,
    /// Centre of the launch distribution.
    pub init_state: [f64; 7],
    /// Half-widths of the uniform jitter added to `init_state`.
    pub init_jitter: [f64; 7],
    /// Feed the true state and mode to the controller instead of the estimates.
    pub truth_feedback: bool,
    /// Enable the guard-attracting controller after a tracking phase times out.
    pub fallback: bool,
    /// Regulate to the flight trim as soon as the last scheduled mode is entered.
    pub hold_final: bool,
    pub gps_rate: f64,
    pub prop_time_constant: f64,
    pub prop_air_ratio: f64,
    /// Stop as soon as the outcome is decided.
    pub stop_on_outcome: bool,
    #[serde(skip)]
    pub noise: SensorNoise,
    #[serde(skip)]
    pub estimator: EstimatorConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_physics: 1e-3,
            dt_control: 1e-2,
            t_max: 10.0,
            seed: 0,
            noise_scale: 1.0,
            accel_bias: [0.0, 0.0],
            drag_multiplier: 1.0,
            init_state: [-3.5, -1.0, 0.0, 0.0, 0.5, 0.0, 0.0],
            init_jitter: [0.5, 0.1, 0.05, 0.0, 0.0, 0.0, 0.0],
            truth_feedback: false,
            fallback: true,
            hold_final: true,
            gps_rate: 10.0,
            prop_time_constant: 0.25 / 3.0,
            prop_air_ratio: 14.5,
            stop_on_outcome: true,
            noise: SensorNoise::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        StepConfig { dt_physics: self.dt_physics, dt_control: self.dt_control, t_max: self.t_max }.substeps()?;
        let ok = self.noise_scale >= 0.0
            && self.drag_multiplier >= 0.0
            && self.gps_rate > 0.0
            && self.prop_time_constant > 0.0
            && self.prop_air_ratio > 0.0
            && self.init_jitter.iter().all(|j| *j >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(SimError::Setup("noise scale, drag, rates, time constants and jitter must be non-negative".into()))
        }
    }
}

/// One physics step of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: Vec7,
    pub q: HybridMode,
    pub x_est: Vec7,
    pub q_est: HybridMode,
    pub control: ControlMode,
    pub tau: f64,
    pub u: Vec2,
    pub psi1: f64,
    pub psi2: f64,
}

/// Guard estimates and their sigmas at a control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSample {
    pub t: f64,
    pub psi_hat: (f64, f64),
    pub sigma: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    pub transitions: Vec<Transition>,
    pub packets: Vec<SensorPacket>,
    pub events: Vec<ModeEvent>,
    pub mode_switches: Vec<ModeSwitch>,
    pub policy_events: Vec<(f64, PolicyEvent)>,
    pub gates: Vec<GateSample>,
    pub outcome: OutcomeLabel,
    /// Error that ended the run early, if any.
    pub diagnostics: Option<String>,
}

impl SimTrace {
    /// True state at the first entry into air.
    pub fn air_entry(&self) -> Option<&Transition> {
        self.transitions.iter().find(|tr| tr.to == HybridMode::Air)
    }

    /// Sequence of estimated modes, starting with the initial belief.
    pub fn estimated_modes(&self) -> Vec<HybridMode> {
        let mut v: Vec<HybridMode> = self.rows.first().map(|r| r.q_est).into_iter().collect();
        v.extend(self.mode_switches.iter().map(|s| s.to));
        v
    }

    pub fn reached_air(&self) -> bool {
        self.air_entry().is_some()
    }
}

/// First line of every trace file.
pub const TRACE_FORMAT: &str = "# uaav trace v1";

pub const TRACE_COLUMNS: [&str; 26] = [
    "t", "r_x", "r_z", "theta", "delta", "v_x", "v_z", "omega_y", "mode", "r_x_est", "r_z_est", "theta_est", "delta_est",
    "v_x_est", "v_z_est", "omega_y_est", "mode_est", "control", "tau", "delta_dot", "thrust", "psi1", "psi2", "outcome",
    "seed", "drag_multiplier",
];

/// Writes the trace with one row per physics step; the last three columns repeat run metadata.
pub fn write_trace<W: Write>(mut w: W, trace: &SimTrace, seed: u64, drag: f64) -> Result<(), csv::Error> {
    writeln!(w, "{TRACE_FORMAT}")?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TRACE_COLUMNS)?;
    for r in &trace.rows {
        let mut rec: Vec<String> = vec![r.t.to_string()];
        rec.extend(r.x.iter().map(|v| v.to_string()));
        rec.push(r.q.name().to_string());
        rec.extend(r.x_est.iter().map(|v| v.to_string()));
        rec.push(r.q_est.name().to_string());
        rec.push(r.control.to_string());
        rec.push(r.tau.to_string());
        rec.extend([r.u[0], r.u[1], r.psi1, r.psi2].iter().map(|v| v.to_string()));
        rec.push(trace.outcome.name().to_string());
        rec.push(seed.to_string());
        rec.push(drag.to_string());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Runs the full closed loop from a launch state drawn uniformly from the jitter box. Errors inside the run
/// end it early with a timeout label and the error text in the diagnostics.
pub fn closed_loop_run(
    cfg: &SimConfig,
    traj: &NominalTrajectory,
    gains: &GainSchedule,
    params: &VehicleParams,
) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    let step_cfg = StepConfig { dt_physics: cfg.dt_physics, dt_control: cfg.dt_control, t_max: cfg.t_max };
    let sub = step_cfg.substeps()?;
    let dt = cfg.dt_control / sub as f64;
    let ticks = (cfg.t_max / cfg.dt_control).round() as usize;

    let truth_params = VehicleParams { drag_multiplier: params.drag_multiplier * cfg.drag_multiplier, ..params.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = Vec7::from(cfg.init_state);
    for (xi, j) in x.iter_mut().zip(cfg.init_jitter) {
        if j > 0.0 {
            *xi += rng.random_range(-j..=j);
        }
    }
    let mut q = HybridMode::from_guards(guard_psi1(&x, params), guard_psi2(&x, params));
    let schedule: Vec<HybridMode> = traj.phases.iter().map(|p| p.mode).collect();
    if q != schedule[0] {
        return Err(SimError::Setup(format!("launch state lies in {q}, not in {}", schedule[0])));
    }
    let sensor_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let sensor_cfg = SensorConfig {
        noise: cfg.noise.scaled(cfg.noise_scale),
        accel_bias: Vec2::from(cfg.accel_bias),
        gps_every: ((1.0 / cfg.gps_rate) / cfg.dt_control).round().max(1.0) as usize,
    };
    let mut sensors = SensorModel::new(sensor_cfg, PropModel::new(cfg.prop_time_constant, cfg.prop_air_ratio), sensor_rng);
    let mut est = HybridEstimator::new(&x, schedule, params, cfg.noise, cfg.estimator.clone());
    let mut cs = ControllerState::initial(traj);
    let policy_opts = PolicyOptions { dt: cfg.dt_control, fallback: cfg.fallback, hold_final: cfg.hold_final };
    let mut outcome = OutcomeTracker::new(OutcomeRules::default());

    let mut trace = SimTrace {
        rows: Vec::with_capacity(ticks * sub + 1),
        transitions: vec![],
        packets: vec![],
        events: vec![],
        mode_switches: vec![],
        policy_events: vec![],
        gates: vec![],
        outcome: OutcomeLabel::Timeout,
        diagnostics: None,
    };
    let row = |t: f64, x: &Vec7, q, est: &HybridEstimator, cs: &ControllerState, u: Vec2| TraceRow {
        t,
        x: *x,
        q,
        x_est: est.state_vector(x[3]),
        q_est: est.mode(),
        control: cs.m,
        tau: cs.tau,
        u,
        psi1: guard_psi1(x, params),
        psi2: guard_psi2(x, params),
    };
    trace.rows.push(row(0.0, &x, q, &est, &cs, Vec2::zeros()));
    outcome.push(0.0, &x, q);

    'ticks: for k in 0..ticks {
        let t_tick = k as f64 * cfg.dt_control;
        let packet = sensors.packet(t_tick, &x, q, params);
        let step = est.update(&packet, x[3]);
        trace.packets.push(packet);
        trace.events.extend(step.events.iter().copied());
        trace.mode_switches.extend(step.switch);
        trace.gates.push(GateSample { t: t_tick, psi_hat: step.guard_vals, sigma: step.guard_sigmas });

        let (x_ctrl, q_ctrl) = if cfg.truth_feedback { (x, q) } else { (est.state_vector(x[3]), est.mode()) };
        let ps = hybrid_policy(cs, &x_ctrl, q_ctrl, gains, traj, &policy_opts);
        trace.policy_events.extend(ps.events.iter().flatten().map(|e| (t_tick, *e)));
        let u = ps.u;
        cs = ps.next;

        let mut count = 0;
        for i in 0..sub {
            let t = t_tick + i as f64 * dt;
            let (x1, q1) = match hybrid_step(&x, q, &u, t, dt, &truth_params, &mut trace.transitions, &mut count) {
                Ok(v) => v,
                Err(e) => {
                    trace.diagnostics = Some(e.to_string());
                    break 'ticks;
                }
            };
            let imu = sensors.imu(t, &x, &x1, dt, &truth_params);
            est.predict(&imu);
            sensors.step_prop(&x1, &truth_params, dt);
            x = x1;
            q = q1;
            let t1 = t_tick + (i + 1) as f64 * dt;
            trace.rows.push(row(t1, &x, q, &est, &cs, u));
            if outcome.push(t1, &x, q).is_some() && cfg.stop_on_outcome {
                break 'ticks;
            }
        }
    }
    trace.outcome = outcome.finish();
    Ok(trace)
}
