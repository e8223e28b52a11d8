//! Sensor packets, noise levels and the sensor log format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::linalg::Vec2;

/// One-sigma sensor noise levels, shared by the sensor simulator and the filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoise {
    /// Accelerometer, m/s^2 per sample.
    pub accel: f64,
    /// Gyro, rad/s.
    pub gyro: f64,
    /// Orientation, rad.
    pub orientation: f64,
    /// Gauge pressure, Pa.
    pub pressure: f64,
    /// Propeller speed, fraction of the reading.
    pub prop_speed_frac: f64,
    /// GPS position, m.
    pub gps: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        SensorNoise { accel: 0.05, gyro: 0.01, orientation: 0.01, pressure: 50.0, prop_speed_frac: 0.02, gps: 0.5 }
    }
}

impl SensorNoise {
    /// All levels multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        SensorNoise {
            accel: self.accel * s,
            gyro: self.gyro * s,
            orientation: self.orientation * s,
            pressure: self.pressure * s,
            prop_speed_frac: self.prop_speed_frac * s,
            gps: self.gps * s,
        }
    }
}

/// IMU output averaged over one physics step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub timestamp: f64,
    pub dt: f64,
    /// Specific force in body axes, m/s^2.
    pub accel_body: Vec2,
    pub gyro: f64,
    pub theta_meas: f64,
}

/// Low-rate sensor readings. Unavailable channels are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPacket {
    pub timestamp: f64,
    pub accel_body: Vec2,
    pub gyro: f64,
    pub theta_meas: f64,
    /// Gauge pressure at the pressure port, positive when submerged, Pa.
    pub pressure: f64,
    /// Propeller speed, rev/s.
    pub prop_speed: f64,
    /// `(r_x, r_z)` fix when available.
    pub gps: Option<Vec2>,
}

pub const SENSOR_COLUMNS: [&str; 9] =
    ["t", "accel_x", "accel_z", "gyro", "theta", "pressure", "prop_speed", "gps_x", "gps_z"];

#[derive(Debug, thiserror::Error)]
pub enum SensorLogError {
    #[error("sensor log: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes packets as CSV with NaN for missing channels.
pub fn write_sensor_log<W: Write>(w: W, packets: &[SensorPacket]) -> Result<(), SensorLogError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SENSOR_COLUMNS)?;
    for p in packets {
        let gps = p.gps.unwrap_or(Vec2::repeat(f64::NAN));
        let row = [p.timestamp, p.accel_body.x, p.accel_body.y, p.gyro, p.theta_meas, p.pressure, p.prop_speed, gps.x, gps.y];
        wr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_sensor_log<R: BufRead>(r: R) -> Result<Vec<SensorPacket>, SensorLogError> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().ne(SENSOR_COLUMNS) {
        return Err(SensorLogError::Format("unexpected columns".into()));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| SensorLogError::Format(e.to_string()))?;
        if v.len() != SENSOR_COLUMNS.len() {
            return Err(SensorLogError::Format(format!("expected {} fields", SENSOR_COLUMNS.len())));
        }
        let gps = (v[7].is_finite() && v[8].is_finite()).then(|| Vec2::new(v[7], v[8]));
        out.push(SensorPacket {
            timestamp: v[0],
            accel_body: Vec2::new(v[1], v[2]),
            gyro: v[3],
            theta_meas: v[4],
            pressure: v[5],
            prop_speed: v[6],
            gps,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_roundtrip_keeps_missing_channels() {
        let packets = vec![
            SensorPacket {
                timestamp: 0.01,
                accel_body: Vec2::new(0.1, 9.8),
                gyro: -0.02,
                theta_meas: 0.3,
                pressure: 9810.5,
                prop_speed: 12.25,
                gps: None,
            },
            SensorPacket {
                timestamp: 0.02,
                accel_body: Vec2::new(0.0, 0.0),
                gyro: 0.0,
                theta_meas: 0.7,
                pressure: f64::NAN,
                prop_speed: 300.0,
                gps: Some(Vec2::new(1.5, 0.25)),
            },
        ];
        let mut buf = Vec::new();
        write_sensor_log(&mut buf, &packets).unwrap();
        let back = read_sensor_log(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], packets[0]);
        assert!(back[1].pressure.is_nan());
        assert_eq!(back[1].gps, packets[1].gps);
    }
}
