//! The hybrid estimator: the active mode's EKF plus the domain-event mode estimator.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ekf::{ekf_predict, ekf_update, EstimatorState, Mat6, Measurement, ProcessNoise, Vec6};
use super::measurement::{measurement_model, prop_velocity};
use super::mode::{guard_sigmas, ModeEstimator, ModeEvent, ModeSwitch, PressureCrossingDetector, PropJumpDetector};
use super::sensors::{ImuSample, SensorNoise, SensorPacket};
use crate::dynamics::{guard_psi1, guard_psi2, HybridMode, VehicleParams};
use crate::linalg::{rot, Vec2, Vec7};

/// Filter tuning beyond the sensor noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Process noise densities for position, velocity and bias.
    pub process_position: f64,
    pub process_velocity: f64,
    pub process_bias: f64,
    /// Noise assigned to the attitude-projected depth channel, m.
    pub depth_proj_sigma: f64,
    /// Lower bound on the propeller velocity noise, m/s.
    pub prop_velocity_floor: f64,
    /// Propeller velocity readings whose innovation exceeds this many standard deviations
    /// are discarded; a propeller spinning up in air would otherwise read as a surge.
    pub prop_gate: f64,
    /// Gauge pressures that arm and fire the surface crossing detector, Pa.
    pub pressure_arm: f64,
    pub pressure_dry: f64,
    pub pressure_confirm: usize,
    /// Propeller jump detector windows, in sensor samples.
    pub jump_window: usize,
    pub jump_baseline: usize,
    /// Time within which the guard gate and the domain event must agree, s.
    pub confirm_window: f64,
    pub init_position_sigma: f64,
    pub init_velocity_sigma: f64,
    pub init_bias_sigma: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            process_position: 1e-8,
            process_velocity: 1e-4,
            process_bias: 1e-6,
            depth_proj_sigma: 0.05,
            prop_velocity_floor: 0.01,
            prop_gate: 5.0,
            pressure_arm: 300.0,
            pressure_dry: 150.0,
            pressure_confirm: 3,
            jump_window: 5,
            jump_baseline: 30,
            confirm_window: 0.3,
            init_position_sigma: 0.05,
            init_velocity_sigma: 0.05,
            init_bias_sigma: 0.3,
        }
    }
}

impl EstimatorConfig {
    pub fn process_noise(&self) -> ProcessNoise {
        ProcessNoise { position: self.process_position, velocity: self.process_velocity, bias: self.process_bias }
    }
}

/// Output of one low-rate estimator update.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorStep {
    pub events: Vec<ModeEvent>,
    pub switch: Option<ModeSwitch>,
    pub guard_vals: (f64, f64),
    pub guard_sigmas: (f64, f64),
}

/// Only the filter of the believed mode runs; on a mode switch the next filter
/// starts from the current posterior.
#[derive(Debug, Clone)]
pub struct HybridEstimator {
    pub state: EstimatorState,
    pub gyro: f64,
    modes: ModeEstimator,
    prop: PropJumpDetector,
    pressure: PressureCrossingDetector,
    cfg: EstimatorConfig,
    noise: SensorNoise,
    params: VehicleParams,
}

impl HybridEstimator {
    /// Starts from the known launch pose `x0` with zero bias.
    pub fn new(x0: &Vec7, schedule: Vec<HybridMode>, params: &VehicleParams, noise: SensorNoise, cfg: EstimatorConfig) -> Self {
        let v_world = rot(x0[2]) * Vec2::new(x0[4], x0[5]);
        let (p, v, b) = (cfg.init_position_sigma, cfg.init_velocity_sigma, cfg.init_bias_sigma);
        let cov = Mat6::from_diagonal(&Vec6::from([p * p, p * p, v * v, v * v, b * b, b * b]));
        HybridEstimator {
            state: EstimatorState::new(Vec2::new(x0[0], x0[1]), v_world, x0[2], cov),
            gyro: x0[6],
            modes: ModeEstimator::new(schedule, cfg.confirm_window),
            prop: PropJumpDetector::new(cfg.jump_window, cfg.jump_baseline),
            pressure: PressureCrossingDetector::new(cfg.pressure_arm, cfg.pressure_dry, cfg.pressure_confirm),
            cfg,
            noise,
            params: params.clone(),
        }
    }

    pub fn mode(&self) -> HybridMode {
        self.modes.mode()
    }

    pub fn predict(&mut self, imu: &ImuSample) {
        self.state =
            ekf_predict(&self.state, &imu.accel_body, imu.theta_meas, self.params.gravity, imu.dt, &self.cfg.process_noise());
        self.gyro = imu.gyro;
    }

    /// Full state estimate for the controller; the elevon angle comes from the servo.
    pub fn state_vector(&self, delta: f64) -> Vec7 {
        let r = self.state.position();
        let vb = self.state.body_velocity();
        Vec7::from([r.x, r.y, self.state.theta, delta, vb.x, vb.y, self.gyro])
    }

    fn measurement(&self, packet: &SensorPacket) -> Measurement {
        let mode = self.mode();
        let (h, jac) = measurement_model(&self.state, mode, &self.params);
        let rg = self.params.rho_water * self.params.gravity;
        // a dry port reads zero plus noise and carries no depth information
        let wet = packet.pressure > self.cfg.pressure_dry;
        let signed_p = if wet { -packet.pressure } else { f64::NAN };
        let (y, variance) = match mode {
            HybridMode::Water => {
                let v = prop_velocity(packet.prop_speed, self.params.prop_pitch);
                let sv = (self.noise.prop_speed_frac * v).hypot(self.cfg.prop_velocity_floor);
                (vec![signed_p, v, f64::NAN], vec![self.noise.pressure.powi(2), sv * sv, 1.0])
            }
            HybridMode::TransitionExit | HybridMode::TransitionEntry => {
                let depth = packet.theta_meas.cos() * signed_p / rg;
                (vec![signed_p, depth], vec![self.noise.pressure.powi(2), self.cfg.depth_proj_sigma.powi(2)])
            }
            HybridMode::Air => {
                let g = packet.gps.unwrap_or(Vec2::repeat(f64::NAN));
                (vec![g.y, g.x, f64::NAN], vec![self.noise.gps.powi(2), self.noise.gps.powi(2), 1.0])
            }
        };
        let mut meas = Measurement { y: DVector::from_vec(y), h, jac, variance: DVector::from_vec(variance) };
        if mode == HybridMode::Water && meas.y[1].is_finite() {
            let p = nalgebra::DMatrix::from_column_slice(6, 6, self.state.cov.as_slice());
            let row = meas.jac.row(1);
            let s = (row * p * row.transpose())[(0, 0)] + meas.variance[1];
            if (meas.y[1] - meas.h[1]).abs() > self.cfg.prop_gate * s.sqrt() {
                meas.y[1] = f64::NAN;
            }
        }
        meas
    }

    /// Applies a low-rate packet: domain-event detection, the active filter's
    /// update and the gated mode estimate. `delta` is the servo-reported elevon angle.
    pub fn update(&mut self, packet: &SensorPacket, delta: f64) -> EstimatorStep {
        let now = packet.timestamp;
        self.state.theta = packet.theta_meas;
        self.gyro = packet.gyro;
        let mut events = Vec::new();
        events.extend(self.prop.push(packet.prop_speed, now));
        events.extend(self.pressure.push(packet.pressure, now));
        for e in &events {
            self.modes.observe(*e);
        }
        let meas = self.measurement(packet);
        self.state = ekf_update(&self.state, &meas).0;
        let x = self.state_vector(delta);
        let guard_vals = (guard_psi1(&x, &self.params), guard_psi2(&x, &self.params));
        let sig = guard_sigmas(&self.state, &x, &self.params, self.noise.orientation);
        let switch = self.modes.update(now, guard_vals, sig);
        EstimatorStep { events, switch, guard_vals, guard_sigmas: sig }
    }
}
