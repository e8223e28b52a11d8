//! Structured-text run configuration shared by every command.
//!
//! Every section and key is optional and falls back to the documented default;
//! unknown keys are rejected. The effective configuration, after defaulting, can be
//! rendered back to TOML so each output directory records what produced it.

use std::path::{Path, PathBuf};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::control::{GainOptions, LqrWeights, TrimOptions};
use crate::dynamics::{HybridMode, VehicleParams};
use crate::estimation::{EstimatorConfig, SensorNoise};
use crate::linalg::{Vec2, Vec7};
use crate::sim::SimConfig;
use crate::trajopt::{ModeSchedule, SqpOptions, TrajOptProblem};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Trajectory optimization section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajOptSection {
    /// Ordered mode names, e.g. `["water", "transition_exit", "air"]`.
    pub schedule: Vec<String>,
    /// Knot count per phase.
    pub knots: Vec<usize>,
    pub x_init: [f64; 7],
    pub delta_init: [f64; 7],
    pub x_final: [f64; 7],
    pub delta_final: [f64; 7],
    pub x_lower: [f64; 7],
    pub x_upper: [f64; 7],
    pub u_lower: [f64; 2],
    pub u_upper: [f64; 2],
    pub h_min: f64,
    pub h_max: f64,
    /// Diagonal of the input weight.
    pub r: [f64; 2],
    /// Weight on total duration.
    pub d: f64,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub acceptable_tol: f64,
    pub max_iter: usize,
}

impl Default for TrajOptSection {
    fn default() -> Self {
        let p = TrajOptProblem::default();
        let s = SqpOptions::default();
        let arr7 = |v: Vec7| -> [f64; 7] { v.into() };
        TrajOptSection {
            schedule: p.schedule.phases.iter().map(|m| m.name().to_string()).collect(),
            knots: p.schedule.knots.clone(),
            x_init: arr7(p.x_init),
            delta_init: arr7(p.delta_init),
            x_final: arr7(p.x_final),
            delta_final: arr7(p.delta_final),
            x_lower: arr7(p.x_lower),
            x_upper: arr7(p.x_upper),
            u_lower: p.u_lower.into(),
            u_upper: p.u_upper.into(),
            h_min: p.h_min,
            h_max: p.h_max,
            r: [p.r[(0, 0)], p.r[(1, 1)]],
            d: p.d,
            feas_tol: s.feas_tol,
            opt_tol: s.opt_tol,
            acceptable_tol: s.acceptable_tol,
            max_iter: s.max_iter,
        }
    }
}

impl TrajOptSection {
    pub fn schedule(&self) -> Result<ModeSchedule, ConfigError> {
        let phases = self
            .schedule
            .iter()
            .map(|s| s.parse::<HybridMode>().map_err(|e| ConfigError::Invalid(format!("trajopt.schedule: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let schedule = ModeSchedule { phases, knots: self.knots.clone() };
        schedule.validate().map_err(|e| ConfigError::Invalid(format!("trajopt: {e}")))?;
        Ok(schedule)
    }

    pub fn problem(&self) -> Result<TrajOptProblem, ConfigError> {
        Ok(TrajOptProblem {
            schedule: self.schedule()?,
            x_init: Vec7::from(self.x_init),
            delta_init: Vec7::from(self.delta_init),
            x_final: Vec7::from(self.x_final),
            delta_final: Vec7::from(self.delta_final),
            x_lower: Vec7::from(self.x_lower),
            x_upper: Vec7::from(self.x_upper),
            u_lower: Vec2::from(self.u_lower),
            u_upper: Vec2::from(self.u_upper),
            h_min: self.h_min,
            h_max: self.h_max,
            r: Matrix2::from_diagonal(&Vec2::from(self.r)),
            d: self.d,
        })
    }

    pub fn sqp_options(&self) -> SqpOptions {
        SqpOptions {
            feas_tol: self.feas_tol,
            opt_tol: self.opt_tol,
            acceptable_tol: self.acceptable_tol,
            max_iter: self.max_iter,
            ..SqpOptions::default()
        }
    }
}

/// Feedback synthesis section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    /// State weight diagonal.
    pub q: [f64; 7],
    /// Input weight diagonal.
    pub r: [f64; 2],
    /// Riccati integration and gain sampling step, s.
    pub grid_dt: f64,
    /// Pitch of the flight trim held after water exit, degrees.
    pub air_trim_pitch_deg: f64,
    /// Airspeed of the flight trim, m/s.
    pub air_trim_speed: f64,
    /// Residual accepted by the trim solver.
    pub trim_tol: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        let g = GainOptions::default();
        ControlSection {
            q: g.weights.q,
            r: g.weights.r,
            grid_dt: g.grid_dt,
            air_trim_pitch_deg: g.air_trim_pitch.to_degrees(),
            air_trim_speed: g.air_trim_speed,
            trim_tol: g.trim.tol,
        }
    }
}

/// Sensor noise of the simulated vehicle and the matching filter tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub noise: SensorNoise,
    pub filter: EstimatorConfig,
}

/// Complete configuration of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub vehicle: VehicleParams,
    pub trajopt: TrajOptSection,
    pub control: ControlSection,
    pub estimator: EstimatorSection,
    pub sim: SimConfig,
}

impl RunConfig {
    /// Parses TOML text; `origin` names the source in error messages.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { origin: origin.to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads the file at `path`, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
                Self::from_toml_str(&text, &p.display().to_string())
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.vehicle.validate().map_err(|e| ConfigError::Invalid(format!("vehicle: {e}")))?;
        self.trajopt.schedule()?;
        self.sim.validate().map_err(|e| ConfigError::Invalid(format!("sim: {e}")))?;
        let c = &self.control;
        let weights_ok = c.q.iter().all(|v| *v >= 0.0) && c.r.iter().all(|v| *v > 0.0);
        if !weights_ok || !(c.grid_dt > 0.0) || !(c.air_trim_speed > 0.0) || !(c.trim_tol > 0.0) {
            return Err(ConfigError::Invalid(
                "control: q must be non-negative; r, grid_dt, air_trim_speed and trim_tol positive".into(),
            ));
        }
        Ok(())
    }

    /// Effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn gain_options(&self) -> GainOptions {
        let c = &self.control;
        let t = &self.trajopt;
        GainOptions {
            weights: LqrWeights { q: c.q, r: c.r },
            grid_dt: c.grid_dt,
            trim: TrimOptions { tol: c.trim_tol, thrust_min: t.u_lower[1], thrust_max: t.u_upper[1], ..TrimOptions::default() },
            air_trim_pitch: c.air_trim_pitch_deg.to_radians(),
            air_trim_speed: c.air_trim_speed,
            u_lower: Vec2::from(t.u_lower),
            u_upper: Vec2::from(t.u_upper),
        }
    }

    /// Simulation settings with the sensor and filter sections attached.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig { noise: self.estimator.noise, estimator: self.estimator.filter.clone(), ..self.sim.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("", "test").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.trajopt.problem().unwrap(), TrajOptProblem::default());
        assert_eq!(cfg.gain_options().weights, GainOptions::default().weights);
        assert!((cfg.gain_options().air_trim_pitch - GainOptions::default().air_trim_pitch).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml_str("[sim]\nseeed = 3\n", "test").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
        assert!(err.to_string().contains("seeed"), "{err}");
        let err = RunConfig::from_toml_str("[bogus]\n", "test").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.sim.seed = 42;
        cfg.trajopt.schedule = vec!["water".into()];
        cfg.trajopt.knots = vec![12];
        cfg.estimator.noise.accel = 0.3;
        let back = RunConfig::from_toml_str(&cfg.to_toml(), "echo").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::from_toml_str("[control]\nair_trim_speed = 6.0\n[sim]\ndrag_multiplier = 1.3\n", "t").unwrap();
        assert_eq!(cfg.control.air_trim_speed, 6.0);
        assert_eq!(cfg.control.q, ControlSection::default().q);
        assert_eq!(cfg.sim_config().drag_multiplier, 1.3);
        assert_eq!(cfg.sim_config().noise, SensorNoise::default());
    }

    #[test]
    fn bad_schedule_is_invalid() {
        let err = RunConfig::from_toml_str("[trajopt]\nschedule = [\"water\", \"space\"]\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
        let err = RunConfig::from_toml_str("[trajopt]\nschedule = [\"water\"]\nknots = [10, 10]\n", "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
    }
}
