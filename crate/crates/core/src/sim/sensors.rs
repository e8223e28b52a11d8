//! Synthetic IMU, pressure, propeller and GPS readings from the true state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{guard_psi1, HybridMode, VehicleParams};
use crate::estimation::{ImuSample, SensorNoise, SensorPacket};
use crate::linalg::{rot, wrap_angle, Vec2, Vec7};

/// Propeller speed: no-slip advance in water, scaled by a first-order multiplier
/// that rises toward `air_ratio` while the propeller (at the nose) is out of the water.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropModel {
    pub multiplier: f64,
    pub time_constant: f64,
    pub air_ratio: f64,
}

impl PropModel {
    pub fn new(time_constant: f64, air_ratio: f64) -> Self {
        PropModel { multiplier: 1.0, time_constant, air_ratio }
    }

    pub fn step(&mut self, in_air: bool, dt: f64) {
        let target = if in_air { self.air_ratio } else { 1.0 };
        let a = (-dt / self.time_constant).exp();
        self.multiplier = target + (self.multiplier - target) * a;
    }

    /// Shaft speed in rev/s for body-x speed `v_x`.
    pub fn speed(&self, v_x: f64, pitch: f64) -> f64 {
        self.multiplier * v_x.max(0.0) / pitch
    }
}

/// Sensor rates and error sources of the simulated vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub noise: SensorNoise,
    /// Constant accelerometer bias, body axes, m/s^2.
    pub accel_bias: Vec2,
    /// GPS fixes are produced on every `gps_every`-th packet while in air.
    pub gps_every: usize,
}

/// Stateful sensor suite with its own random stream.
#[derive(Debug, Clone)]
pub struct SensorModel {
    pub cfg: SensorConfig,
    pub prop: PropModel,
    rng: ChaCha8Rng,
    packets: usize,
    last_imu: Option<ImuSample>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

impl SensorModel {
    pub fn new(cfg: SensorConfig, prop: PropModel, rng: ChaCha8Rng) -> Self {
        SensorModel { cfg, prop, rng, packets: 0, last_imu: None }
    }

    /// IMU sample over the physics step from `x0` to `x1`: the step-mean specific force
    /// expressed at the midpoint attitude, the mean pitch rate and the midpoint pitch.
    pub fn imu(&mut self, t: f64, x0: &Vec7, x1: &Vec7, dt: f64, params: &VehicleParams) -> ImuSample {
        let v0 = rot(x0[2]) * Vec2::new(x0[4], x0[5]);
        let v1 = rot(x1[2]) * Vec2::new(x1[4], x1[5]);
        let a_world = (v1 - v0) / dt;
        let dtheta = wrap_angle(x1[2] - x0[2]);
        let theta_mid = x0[2] + 0.5 * dtheta;
        let n = &self.cfg.noise;
        let f_body = rot(theta_mid).transpose() * (a_world + Vec2::new(0.0, params.gravity)) + self.cfg.accel_bias;
        let noise_a = Vec2::new(normal(&mut self.rng), normal(&mut self.rng)) * n.accel;
        let sample = ImuSample {
            timestamp: t + dt,
            dt,
            accel_body: f_body + noise_a,
            gyro: dtheta / dt + n.gyro * normal(&mut self.rng),
            theta_meas: theta_mid + n.orientation * normal(&mut self.rng),
        };
        self.last_imu = Some(sample);
        sample
    }

    /// Advances the propeller spin-up state over one physics step.
    pub fn step_prop(&mut self, x: &Vec7, params: &VehicleParams, dt: f64) {
        self.prop.step(guard_psi1(x, params) >= 0.0, dt);
    }

    /// Low-rate packet at time `t`.
    pub fn packet(&mut self, t: f64, truth: &Vec7, truth_mode: HybridMode, params: &VehicleParams) -> SensorPacket {
        let n = self.cfg.noise;
        let imu = self.last_imu.unwrap_or(ImuSample {
            timestamp: t,
            dt: 0.0,
            accel_body: rot(truth[2]).transpose() * Vec2::new(0.0, params.gravity) + self.cfg.accel_bias,
            gyro: truth[6],
            theta_meas: truth[2],
        });
        let gauge = params.rho_water * params.gravity * (-truth[1]).max(0.0);
        let pressure = gauge + n.pressure * normal(&mut self.rng);
        let omega = self.prop.speed(truth[4], params.prop_pitch);
        let prop_speed = (omega * (1.0 + n.prop_speed_frac * normal(&mut self.rng))).max(0.0);
        let gps_due = self.packets.is_multiple_of(self.cfg.gps_every.max(1));
        let gps = (truth_mode == HybridMode::Air && gps_due).then(|| {
            Vec2::new(truth[0] + n.gps * normal(&mut self.rng), truth[1] + n.gps * normal(&mut self.rng))
        });
        self.packets += 1;
        SensorPacket {
            timestamp: t,
            accel_body: imu.accel_body,
            gyro: imu.gyro,
            theta_meas: imu.theta_meas,
            pressure,
            prop_speed,
            gps,
        }
    }
}

/// Packet for a single truth sample with a fresh propeller state; see [`SensorModel`].
pub fn simulate_sensors(
    truth: &Vec7,
    truth_mode: HybridMode,
    rng: ChaCha8Rng,
    cfg: &SensorConfig,
    params: &VehicleParams,
) -> SensorPacket {
    let mut prop = PropModel::new(0.25 / 3.0, 14.5);
    if guard_psi1(truth, params) >= 0.0 {
        prop.multiplier = prop.air_ratio;
    }
    SensorModel::new(*cfg, prop, rng).packet(0.0, truth, truth_mode, params)
}
