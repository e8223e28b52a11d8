//! TVLQR gain synthesis along a nominal trajectory and the gain-schedule file format.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::riccati::{lqr_infinite, riccati_backward, RiccatiError};
use super::trim::{compute_trim, TrimCondition, TrimError, TrimOptions};
use crate::dynamics::{linearize, HybridMode, VehicleParams};
use crate::linalg::{Mat2x7, Mat7, Vec2, Vec7};
use crate::trajopt::NominalTrajectory;

/// Diagonal LQR weights over the full state and the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrWeights {
    pub q: [f64; 7],
    pub r: [f64; 2],
}

impl Default for LqrWeights {
    fn default() -> Self {
        LqrWeights { q: [10.0, 10.0, 50.0, 1.0, 1.0, 1.0, 5.0], r: [0.1, 0.01] }
    }
}

impl LqrWeights {
    pub fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&self.q))
    }

    pub fn r_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&self.r))
    }

    /// Weights restricted to the position-free states `(theta, delta, v_x, v_z, omega_y)`.
    pub fn reduced_q(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&self.q[2..]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainOptions {
    pub weights: LqrWeights,
    /// Riccati integration and gain sampling step, s.
    pub grid_dt: f64,
    pub trim: TrimOptions,
    /// Pitch and airspeed of the flight trim that the final guard-attracting controller holds.
    pub air_trim_pitch: f64,
    pub air_trim_speed: f64,
    pub u_lower: Vec2,
    pub u_upper: Vec2,
}

impl Default for GainOptions {
    fn default() -> Self {
        GainOptions {
            weights: LqrWeights::default(),
            grid_dt: 1e-3,
            trim: TrimOptions::default(),
            air_trim_pitch: std::f64::consts::FRAC_PI_4,
            air_trim_speed: 5.0,
            u_lower: Vec2::new(-10.0, 0.0),
            u_upper: Vec2::new(10.0, 5.0),
        }
    }
}

/// Gains for one phase of the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGains {
    pub mode: HybridMode,
    /// `T(q)`, s.
    pub duration: f64,
    pub taus: Vec<f64>,
    pub k: Vec<Mat2x7>,
    pub s: Vec<Mat7>,
    /// Time-invariant gain acting on the position-free states (position columns are zero).
    pub guard_gain: Mat2x7,
    pub trim: TrimCondition,
}

impl PhaseGains {
    /// Gain at phase time `tau`, linearly interpolated and clamped to `[0, T(q)]`.
    pub fn gain_at(&self, tau: f64) -> Mat2x7 {
        let n = self.taus.len();
        if n == 1 || tau <= self.taus[0] {
            return self.k[0];
        }
        if tau >= self.taus[n - 1] {
            return self.k[n - 1];
        }
        let i = self.taus.partition_point(|t| *t <= tau).clamp(1, n - 1) - 1;
        let w = (tau - self.taus[i]) / (self.taus[i + 1] - self.taus[i]);
        self.k[i] * (1.0 - w) + self.k[i + 1] * w
    }

    /// Smallest and largest eigenvalue of `S` over the grid.
    pub fn s_eigen_range(&self) -> (f64, f64) {
        self.s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            let (a, b) = crate::linalg::eigen_range(&DMatrix::from_column_slice(7, 7, s.as_slice()));
            (lo.min(a), hi.max(b))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub phases: Vec<PhaseGains>,
    pub u_lower: Vec2,
    pub u_upper: Vec2,
}

impl GainSchedule {
    pub fn phase_index(&self, mode: HybridMode) -> Option<usize> {
        self.phases.iter().position(|p| p.mode == mode)
    }

    pub fn phase(&self, mode: HybridMode) -> Option<&PhaseGains> {
        self.phase_index(mode).map(|i| &self.phases[i])
    }

    pub fn saturate(&self, u: Vec2) -> (Vec2, bool) {
        let s = Vec2::new(u[0].clamp(self.u_lower[0], self.u_upper[0]), u[1].clamp(self.u_lower[1], self.u_upper[1]));
        (s, s != u)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GainError {
    #[error("phase {mode}: {source}")]
    Riccati { mode: HybridMode, source: RiccatiError },
    #[error(transparent)]
    Trim(#[from] TrimError),
    #[error("gain file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Trim targeted by the guard-attracting controller of `mode`: the nominal guard
/// state for phases that end on a guard, the configured flight trim for the last Air phase.
pub fn guard_trim_for_phase(
    traj: &NominalTrajectory,
    j: usize,
    params: &VehicleParams,
    opts: &GainOptions,
) -> Result<TrimCondition, TrimError> {
    let ph = &traj.phases[j];
    let mut x_guard = *ph.states.last().unwrap();
    if ph.mode == HybridMode::Air && j + 1 == traj.phases.len() {
        x_guard[2] = opts.air_trim_pitch;
        x_guard[4] = opts.air_trim_speed;
        x_guard[5] = 0.0;
    }
    compute_trim(&x_guard, ph.mode, params, &opts.trim)
}

/// Time-invariant LQR about a trim on the position-free states, embedded as a 2x7 gain.
pub fn guard_gain(trim: &TrimCondition, params: &VehicleParams, weights: &LqrWeights) -> Result<Mat2x7, GainError> {
    let (a, b) = linearize(&trim.x_trim, &trim.u_trim, trim.mode, params)
        .map_err(|_| GainError::Riccati { mode: trim.mode, source: RiccatiError::Linearization { tau: 0.0 } })?;
    let a_red = DMatrix::from_fn(5, 5, |r, c| a[(r + 2, c + 2)]);
    let b_red = DMatrix::from_fn(5, 2, |r, c| b[(r + 2, c)]);
    let (k, _) = lqr_infinite(&a_red, &b_red, &weights.reduced_q(), &weights.r_matrix())
        .map_err(|source| GainError::Riccati { mode: trim.mode, source })?;
    let mut out = Mat2x7::zeros();
    for r in 0..2 {
        for c in 0..5 {
            out[(r, c + 2)] = k[(r, c)];
        }
    }
    Ok(out)
}

/// Synthesizes TVLQR gains for every phase, last phase first, chaining the
/// terminal cost-to-go through the identity reset, plus trims and guard gains.
pub fn synthesize_gains(
    traj: &NominalTrajectory,
    params: &VehicleParams,
    opts: &GainOptions,
) -> Result<GainSchedule, GainError> {
    let q = opts.weights.q_matrix();
    let r = opts.weights.r_matrix();
    let mut s_final = q.clone();
    let mut phases = Vec::with_capacity(traj.phases.len());
    for j in (0..traj.phases.len()).rev() {
        let ph = &traj.phases[j];
        let mode = ph.mode;
        let ab = |tau: f64| {
            let smp = traj.sample_phase(j, tau);
            linearize(&smp.x, &smp.u, mode, params).ok().map(|(a, b)| {
                (DMatrix::from_column_slice(7, 7, a.as_slice()), DMatrix::from_column_slice(7, 2, b.as_slice()))
            })
        };
        let sol = riccati_backward(ab, ph.duration(), &q, &r, &s_final, opts.grid_dt)
            .map_err(|source| GainError::Riccati { mode, source })?;
        let trim = guard_trim_for_phase(traj, j, params, opts)?;
        let gg = guard_gain(&trim, params, &opts.weights)?;
        s_final = sol.s[0].clone();
        phases.push(PhaseGains {
            mode,
            duration: ph.duration(),
            taus: sol.taus,
            k: sol.k.iter().map(|k| Mat2x7::from_column_slice(k.as_slice())).collect(),
            s: sol.s.iter().map(|s| Mat7::from_column_slice(s.as_slice())).collect(),
            guard_gain: gg,
            trim,
        });
    }
    phases.reverse();
    Ok(GainSchedule { phases, u_lower: opts.u_lower, u_upper: opts.u_upper })
}

pub const GAINS_FORMAT: &str = "# uaav gains v1";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_list(s: &str, n: usize, what: &str) -> Result<Vec<f64>, GainError> {
    let v: Result<Vec<f64>, _> = s.split_whitespace().map(str::parse::<f64>).collect();
    match v {
        Ok(v) if v.len() == n => Ok(v),
        _ => Err(GainError::Format(format!("bad `{what}` entry"))),
    }
}

fn row_major_2x7(m: &Mat2x7) -> Vec<f64> {
    (0..2).flat_map(|r| (0..7).map(move |c| m[(r, c)])).collect()
}

fn upper_7(m: &Mat7) -> Vec<f64> {
    (0..7).flat_map(|r| (r..7).map(move |c| m[(r, c)])).collect()
}

impl GainSchedule {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), GainError> {
        writeln!(w, "{GAINS_FORMAT}")?;
        writeln!(w, "# u_lower = {}", join(self.u_lower.as_slice()))?;
        writeln!(w, "# u_upper = {}", join(self.u_upper.as_slice()))?;
        for p in &self.phases {
            let m = p.mode.name();
            writeln!(w, "# {m}.duration = {}", p.duration)?;
            writeln!(w, "# {m}.trim_x = {}", join(p.trim.x_trim.as_slice()))?;
            writeln!(w, "# {m}.trim_u = {}", join(p.trim.u_trim.as_slice()))?;
            writeln!(w, "# {m}.trim_residual = {}", p.trim.residual)?;
            writeln!(w, "# {m}.guard_gain = {}", join(&row_major_2x7(&p.guard_gain)))?;
        }
        let mut header = vec!["mode".to_string(), "tau".to_string()];
        for r in 0..2 {
            for c in 0..7 {
                header.push(format!("k{r}{c}"));
            }
        }
        for r in 0..7 {
            for c in r..7 {
                header.push(format!("s{r}{c}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for p in &self.phases {
            for (i, tau) in p.taus.iter().enumerate() {
                write!(w, "{},{tau}", p.mode.name())?;
                for v in row_major_2x7(&p.k[i]).iter().chain(upper_7(&p.s[i]).iter()) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, GainError> {
        let text = std::io::read_to_string(r)?;
        if text.lines().next().map(str::trim) != Some(GAINS_FORMAT) {
            return Err(GainError::Format("missing format header".into()));
        }
        let mut u_lower = None;
        let mut u_upper = None;
        let mut meta: Vec<(HybridMode, String, String)> = Vec::new();
        for line in text.lines().skip(1).filter(|l| l.starts_with('#')) {
            let Some((key, value)) = line.trim_start_matches('#').split_once('=') else { continue };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "u_lower" => u_lower = Some(Vec2::from_row_slice(&parse_list(value, 2, key)?)),
                "u_upper" => u_upper = Some(Vec2::from_row_slice(&parse_list(value, 2, key)?)),
                _ => {
                    let (mode, field) =
                        key.split_once('.').ok_or_else(|| GainError::Format(format!("unknown header `{key}`")))?;
                    let mode: HybridMode = mode.parse().map_err(|e: crate::dynamics::UnknownMode| GainError::Format(e.to_string()))?;
                    meta.push((mode, field.to_string(), value.to_string()));
                }
            }
        }
        let mut order: Vec<HybridMode> = Vec::new();
        for (m, _, _) in &meta {
            if !order.contains(m) {
                order.push(*m);
            }
        }
        let mut phases = Vec::new();
        for mode in order {
            let get = |f: &str| {
                meta.iter()
                    .find(|(m, k, _)| *m == mode && k == f)
                    .map(|(_, _, v)| v.as_str())
                    .ok_or_else(|| GainError::Format(format!("missing `{}.{f}`", mode.name())))
            };
            let duration = parse_list(get("duration")?, 1, "duration")?[0];
            let x_trim = Vec7::from_row_slice(&parse_list(get("trim_x")?, 7, "trim_x")?);
            let u_trim = Vec2::from_row_slice(&parse_list(get("trim_u")?, 2, "trim_u")?);
            let residual = parse_list(get("trim_residual")?, 1, "trim_residual")?[0];
            let gg = Mat2x7::from_row_slice(&parse_list(get("guard_gain")?, 14, "guard_gain")?);
            phases.push(PhaseGains {
                mode,
                duration,
                taus: vec![],
                k: vec![],
                s: vec![],
                guard_gain: gg,
                trim: TrimCondition { mode, x_trim, u_trim, residual },
            });
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 + 14 + 28 {
                return Err(GainError::Format(format!("expected 44 columns, found {}", rec.len())));
            }
            let mode: HybridMode = rec[0].parse().map_err(|e: crate::dynamics::UnknownMode| GainError::Format(e.to_string()))?;
            let vals: Result<Vec<f64>, _> = rec.iter().skip(1).map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|_| GainError::Format("bad number".into()))?;
            let p = phases
                .iter_mut()
                .find(|p| p.mode == mode)
                .ok_or_else(|| GainError::Format(format!("rows for undeclared phase {mode}")))?;
            if p.taus.last().is_some_and(|t| *t >= vals[0]) {
                return Err(GainError::Format(format!("tau grid of {mode} is not increasing")));
            }
            p.taus.push(vals[0]);
            p.k.push(Mat2x7::from_row_slice(&vals[1..15]));
            let mut s = Mat7::zeros();
            let mut it = vals[15..].iter();
            for r in 0..7 {
                for c in r..7 {
                    let v = *it.next().unwrap();
                    s[(r, c)] = v;
                    s[(c, r)] = v;
                }
            }
            p.s.push(s);
        }
        for p in &phases {
            if p.taus.is_empty() {
                return Err(GainError::Format(format!("phase {} has no gain rows", p.mode)));
            }
        }
        Ok(GainSchedule {
            phases,
            u_lower: u_lower.ok_or_else(|| GainError::Format("missing u_lower".into()))?,
            u_upper: u_upper.ok_or_else(|| GainError::Format("missing u_upper".into()))?,
        })
    }
}
