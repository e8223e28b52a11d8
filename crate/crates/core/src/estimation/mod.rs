//! Hybrid state estimation: IMU-driven EKF with mode-specific measurement models
//! and a mode estimator fused with discrete domain sensors.

mod ekf;
mod filter;
mod measurement;
mod mode;
mod sensors;

pub use ekf::{ekf_predict, ekf_update, EstimatorState, Mat6, Measurement, ProcessNoise, UpdateReport, Vec6};
pub use filter::{EstimatorConfig, EstimatorStep, HybridEstimator};
pub use measurement::{measurement_air, measurement_model, measurement_transition, measurement_water, prop_velocity};
pub use mode::{
    guard_sigmas, mode_estimator, prop_jump_detector, ModeEstimator, ModeEvent, ModeEventKind, ModeSwitch,
    PressureCrossingDetector, PropJumpDetector, PROP_JUMP_RATIO,
};
pub use sensors::{read_sensor_log, write_sensor_log, ImuSample, SensorLogError, SensorNoise, SensorPacket, SENSOR_COLUMNS};
