use std::io::{BufRead, Write};

use crate::dynamics::{dynamics, HybridMode, VehicleParams};
use crate::linalg::{Vec2, Vec7};

/// Knot data of one phase. Knot `i` sits at phase time `i * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajPhase {
    pub mode: HybridMode,
    pub h: f64,
    /// Global start time.
    pub t0: f64,
    pub states: Vec<Vec7>,
    pub controls: Vec<Vec2>,
    /// State derivatives at the knots, used by the Hermite interpolant.
    pub derivs: Vec<Vec7>,
}

impl TrajPhase {
    pub fn new(mode: HybridMode, h: f64, t0: f64, states: Vec<Vec7>, controls: Vec<Vec2>, params: &VehicleParams) -> Self {
        let derivs = states.iter().zip(&controls).map(|(x, u)| dynamics(x, u, mode, params)).collect();
        TrajPhase { mode, h, t0, states, controls, derivs }
    }

    pub fn intervals(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// `T(q) = n h`.
    pub fn duration(&self) -> f64 {
        self.h * self.intervals() as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajMeta {
    pub cost: f64,
    pub iterations: usize,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalTrajectory {
    pub phases: Vec<TrajPhase>,
    pub meta: TrajMeta,
}

/// Interpolated reference; `clamped` is set when the requested time was outside the phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: Vec7,
    pub u: Vec2,
    pub clamped: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("trajectory file: {0}")]
    Format(String),
    #[error("phases {phase} and {next} are discontinuous (gap {gap:.3e})")]
    Discontinuous { phase: usize, next: usize, gap: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const TRAJECTORY_FORMAT: &str = "# uaav trajectory v1";

impl NominalTrajectory {
    pub fn phase_index(&self, mode: HybridMode) -> Option<usize> {
        self.phases.iter().position(|p| p.mode == mode)
    }

    pub fn duration(&self, mode: HybridMode) -> Option<f64> {
        self.phase_index(mode).map(|j| self.phases[j].duration())
    }

    pub fn total_duration(&self) -> f64 {
        self.phases.iter().map(TrajPhase::duration).sum()
    }

    pub fn initial_state(&self) -> Vec7 {
        self.phases[0].states[0]
    }

    pub fn final_state(&self) -> Vec7 {
        *self.phases.last().unwrap().states.last().unwrap()
    }

    /// Reference at phase time `tau` of the phase flying `mode`.
    pub fn sample(&self, tau: f64, mode: HybridMode) -> Option<Sample> {
        self.phase_index(mode).map(|j| self.sample_phase(j, tau))
    }

    /// Cubic Hermite state and linear control interpolation within phase `j`.
    pub fn sample_phase(&self, j: usize, tau: f64) -> Sample {
        let ph = &self.phases[j];
        let n = ph.intervals();
        let dur = ph.duration();
        let clamped = !(0.0..=dur).contains(&tau);
        let t = tau.clamp(0.0, dur);
        if n == 0 || ph.h <= 0.0 || t <= 0.0 {
            return Sample { x: ph.states[0], u: ph.controls[0], clamped };
        }
        if t >= dur {
            return Sample { x: ph.states[n], u: ph.controls[n], clamped };
        }
        let k = ((t / ph.h).floor() as usize).min(n - 1);
        let s = (t - k as f64 * ph.h) / ph.h;
        if s == 0.0 {
            return Sample { x: ph.states[k], u: ph.controls[k], clamped };
        }
        if s == 1.0 {
            return Sample { x: ph.states[k + 1], u: ph.controls[k + 1], clamped };
        }
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let x = ph.states[k] * h00
            + ph.derivs[k] * (h10 * ph.h)
            + ph.states[k + 1] * h01
            + ph.derivs[k + 1] * (h11 * ph.h);
        let u = ph.controls[k] * (1.0 - s) + ph.controls[k + 1] * s;
        Sample { x, u, clamped }
    }

    /// Checks that each phase starts where the previous one ended.
    pub fn check_continuity(&self, tol: f64) -> Result<(), TrajectoryError> {
        for j in 1..self.phases.len() {
            let a = self.phases[j - 1].states.last().unwrap();
            let b = &self.phases[j].states[0];
            let gap = (a - b).amax();
            if !(gap <= tol) {
                return Err(TrajectoryError::Discontinuous { phase: j - 1, next: j, gap });
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TrajectoryError> {
        writeln!(w, "{TRAJECTORY_FORMAT}")?;
        let modes: Vec<&str> = self.phases.iter().map(|p| p.mode.name()).collect();
        let knots: Vec<String> = self.phases.iter().map(|p| p.intervals().to_string()).collect();
        writeln!(w, "# schedule = {}", modes.join(","))?;
        writeln!(w, "# knots = {}", knots.join(","))?;
        writeln!(w, "# cost = {}", self.meta.cost)?;
        writeln!(w, "# iterations = {}", self.meta.iterations)?;
        writeln!(w, "# max_violation = {}", self.meta.max_violation)?;
        writeln!(w, "phase,k,t,r_x,r_z,theta,delta,v_x,v_z,omega_y,delta_dot,thrust,h")?;
        for (j, ph) in self.phases.iter().enumerate() {
            for (k, (x, u)) in ph.states.iter().zip(&ph.controls).enumerate() {
                let t = ph.t0 + k as f64 * ph.h;
                write!(w, "{j},{k},{t}")?;
                for v in x.iter().chain(u.iter()) {
                    write!(w, ",{v}")?;
                }
                writeln!(w, ",{}", ph.h)?;
            }
        }
        Ok(())
    }

    /// Parses a trajectory file and recomputes knot derivatives for `params`.
    pub fn read_csv<R: BufRead>(r: R, params: &VehicleParams) -> Result<Self, TrajectoryError> {
        let text = std::io::read_to_string(r)?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(TRAJECTORY_FORMAT) {
            return Err(TrajectoryError::Format("missing format header".into()));
        }
        let mut schedule: Option<Vec<HybridMode>> = None;
        let mut meta = TrajMeta::default();
        for line in text.lines().filter(|l| l.starts_with('#')).skip(1) {
            let Some((key, value)) = line.trim_start_matches('#').split_once('=') else { continue };
            let value = value.trim();
            let bad = |k: &str| TrajectoryError::Format(format!("bad `{k}` header"));
            match key.trim() {
                "schedule" => {
                    let modes: Result<Vec<_>, _> = value.split(',').map(|s| s.parse::<HybridMode>()).collect();
                    schedule = Some(modes.map_err(|e| TrajectoryError::Format(e.to_string()))?);
                }
                "cost" => meta.cost = value.parse().map_err(|_| bad("cost"))?,
                "iterations" => meta.iterations = value.parse().map_err(|_| bad("iterations"))?,
                "max_violation" => meta.max_violation = value.parse().map_err(|_| bad("max_violation"))?,
                _ => {}
            }
        }
        let schedule = schedule.ok_or_else(|| TrajectoryError::Format("missing schedule header".into()))?;
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut raw: Vec<(f64, Vec<Vec7>, Vec<Vec2>, f64)> = schedule.iter().map(|_| (0.0, vec![], vec![], f64::NAN)).collect();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 13 {
                return Err(TrajectoryError::Format(format!("expected 13 columns, found {}", rec.len())));
            }
            let num = |i: usize| -> Result<f64, TrajectoryError> {
                rec[i].trim().parse::<f64>().map_err(|_| TrajectoryError::Format(format!("bad number `{}`", &rec[i])))
            };
            let j: usize = rec[0].trim().parse().map_err(|_| TrajectoryError::Format("bad phase index".into()))?;
            let k: usize = rec[1].trim().parse().map_err(|_| TrajectoryError::Format("bad knot index".into()))?;
            let entry = raw.get_mut(j).ok_or_else(|| TrajectoryError::Format(format!("phase {j} not in schedule")))?;
            if k != entry.1.len() {
                return Err(TrajectoryError::Format(format!("knots of phase {j} out of order")));
            }
            if k == 0 {
                entry.0 = num(2)?;
            }
            let mut x = Vec7::zeros();
            for i in 0..7 {
                x[i] = num(3 + i)?;
            }
            entry.1.push(x);
            entry.2.push(Vec2::new(num(10)?, num(11)?));
            entry.3 = num(12)?;
        }
        let mut phases = Vec::with_capacity(schedule.len());
        for (j, (mode, (t0, states, controls, h))) in schedule.into_iter().zip(raw).enumerate() {
            if states.len() < 2 || !(h > 0.0) {
                return Err(TrajectoryError::Format(format!("phase {j} needs at least two knots and h > 0")));
            }
            phases.push(TrajPhase::new(mode, h, t0, states, controls, params));
        }
        let traj = NominalTrajectory { phases, meta };
        traj.check_continuity(1e-9)?;
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_traj() -> NominalTrajectory {
        let p = VehicleParams::default();
        let states: Vec<Vec7> = (0..5).map(|i| Vec7::from_fn(|r, _| (r as f64 + 1.0) * 0.1 * i as f64 - 1.0)).collect();
        let controls: Vec<Vec2> = (0..5).map(|i| Vec2::new(0.1 * i as f64, 2.0)).collect();
        let ph = TrajPhase::new(HybridMode::Water, 0.1, 0.0, states.clone(), controls.clone(), &p);
        let ph2 = TrajPhase::new(HybridMode::TransitionExit, 0.05, 0.4, vec![states[4], states[4]], vec![controls[4]; 2], &p);
        NominalTrajectory { phases: vec![ph, ph2], meta: TrajMeta::default() }
    }

    #[test]
    fn sample_hits_knots_and_midpoint_formula() {
        let tr = sample_traj();
        let ph = &tr.phases[0];
        let s = tr.sample(0.0, HybridMode::Water).unwrap();
        assert_eq!(s.x, ph.states[0]);
        assert!(!s.clamped);
        let s = tr.sample(0.2, HybridMode::Water).unwrap();
        assert!((s.x - ph.states[2]).amax() < 1e-12);
        let s = tr.sample(0.15, HybridMode::Water).unwrap();
        let xc = (ph.states[1] + ph.states[2]) * 0.5 + (ph.derivs[1] - ph.derivs[2]) * (0.1 / 8.0);
        assert!((s.x - xc).amax() < 1e-12);
        assert!((s.u - (ph.controls[1] + ph.controls[2]) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn out_of_range_sample_is_clamped() {
        let tr = sample_traj();
        let s = tr.sample(5.0, HybridMode::Water).unwrap();
        assert!(s.clamped);
        assert_eq!(s.x, tr.phases[0].states[4]);
        assert!(tr.sample(-1.0, HybridMode::Water).unwrap().clamped);
        assert!(tr.sample(0.0, HybridMode::Air).is_none());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tr = sample_traj();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = NominalTrajectory::read_csv(&buf[..], &VehicleParams::default()).unwrap();
        assert_eq!(back.phases, tr.phases);
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn discontinuous_file_rejected() {
        let mut tr = sample_traj();
        tr.phases[1].states[0][1] += 0.1;
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let err = NominalTrajectory::read_csv(&buf[..], &VehicleParams::default()).unwrap_err();
        assert!(matches!(err, TrajectoryError::Discontinuous { phase: 0, next: 1, .. }));
    }
}
