//! Seeded sweeps of closed-loop runs.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::outcome::OutcomeLabel;
use super::run::{closed_loop_run, SimConfig};
use crate::control::GainSchedule;
use crate::dynamics::VehicleParams;
use crate::trajopt::NominalTrajectory;

/// Per-run result with the water-exit state (pitch and body-z velocity at first air entry).
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub drag_multiplier: f64,
    pub outcome: OutcomeLabel,
    pub air_reached: bool,
    pub exit_time: f64,
    pub exit_pitch: f64,
    pub exit_v_z: f64,
    pub exit_v_x: f64,
    pub max_pitch: f64,
    pub t_end: f64,
    pub diagnostics: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub runs: Vec<RunSummary>,
}

impl SweepSummary {
    /// Fraction of runs at `drag` with the given outcome.
    pub fn rate(&self, drag: f64, label: OutcomeLabel) -> f64 {
        let at: Vec<_> = self.runs.iter().filter(|r| r.drag_multiplier == drag).collect();
        if at.is_empty() {
            return 0.0;
        }
        at.iter().filter(|r| r.outcome == label).count() as f64 / at.len() as f64
    }

    pub fn count(&self, label: OutcomeLabel) -> usize {
        self.runs.iter().filter(|r| r.outcome == label).count()
    }

    /// Distinct drag multipliers in first-seen order.
    pub fn drags(&self) -> Vec<f64> {
        let mut out: Vec<f64> = vec![];
        for r in &self.runs {
            if !out.contains(&r.drag_multiplier) {
                out.push(r.drag_multiplier);
            }
        }
        out
    }

    /// One line per drag multiplier with the run count and the rate of every outcome.
    pub fn aggregate_lines(&self) -> Vec<String> {
        self.drags()
            .into_iter()
            .map(|d| {
                let n = self.runs.iter().filter(|r| r.drag_multiplier == d).count();
                let rates: Vec<String> = OutcomeLabel::ALL
                    .iter()
                    .map(|l| format!("{}_rate={:.3}", l.name(), self.rate(d, *l)))
                    .collect();
                format!("drag_multiplier={d} runs={n} {}", rates.join(" "))
            })
            .collect()
    }
}

fn summarize(cfg: &SimConfig, traj: &NominalTrajectory, gains: &GainSchedule, params: &VehicleParams) -> RunSummary {
    let mut s = RunSummary {
        seed: cfg.seed,
        drag_multiplier: cfg.drag_multiplier,
        outcome: OutcomeLabel::Timeout,
        air_reached: false,
        exit_time: f64::NAN,
        exit_pitch: f64::NAN,
        exit_v_z: f64::NAN,
        exit_v_x: f64::NAN,
        max_pitch: f64::NAN,
        t_end: 0.0,
        diagnostics: String::new(),
    };
    match closed_loop_run(cfg, traj, gains, params) {
        Ok(trace) => {
            s.outcome = trace.outcome;
            if let Some(e) = trace.air_entry() {
                s.air_reached = true;
                s.exit_time = e.t;
                s.exit_pitch = e.x[2];
                s.exit_v_x = e.x[4];
                s.exit_v_z = e.x[5];
            }
            s.max_pitch = trace.rows.iter().map(|r| r.x[2]).fold(f64::NEG_INFINITY, f64::max);
            s.t_end = trace.rows.last().map_or(0.0, |r| r.t);
            s.diagnostics = trace.diagnostics.unwrap_or_default();
        }
        Err(e) => s.diagnostics = e.to_string(),
    }
    s
}

/// Runs `n_runs` seeds (`cfg.seed + i`) at every drag multiplier of the grid. Runs are
/// independent and spread over `threads` workers; the output order is fixed
/// (grid-major, then seed) regardless of scheduling.
pub fn monte_carlo(
    cfg: &SimConfig,
    n_runs: usize,
    drag_grid: &[f64],
    traj: &NominalTrajectory,
    gains: &GainSchedule,
    params: &VehicleParams,
    threads: usize,
) -> SweepSummary {
    let jobs: Vec<SimConfig> = drag_grid
        .iter()
        .flat_map(|&d| {
            (0..n_runs).map(move |i| SimConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                drag_multiplier: d,
                ..cfg.clone()
            })
        })
        .collect();
    let results: Mutex<Vec<Option<RunSummary>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    let workers = threads.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = summarize(job, traj, gains, params);
                results.lock().expect("result table poisoned")[i] = Some(r);
            });
        }
    });
    let runs = results.into_inner().expect("result table poisoned").into_iter().flatten().collect();
    SweepSummary { runs }
}

/// First line of every summary file.
pub const SUMMARY_FORMAT: &str = "# uaav montecarlo v1";

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "seed", "drag_multiplier", "outcome", "air_reached", "exit_time", "exit_pitch", "exit_v_z", "exit_v_x", "max_pitch",
    "t_end", "diagnostics",
];

/// Writes the per-run rows followed by the aggregate block as `#` comment lines.
pub fn write_summary<W: Write>(mut w: W, sweep: &SweepSummary) -> Result<(), csv::Error> {
    writeln!(w, "{SUMMARY_FORMAT}")?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SUMMARY_COLUMNS)?;
    for r in &sweep.runs {
        wr.write_record([
            r.seed.to_string(),
            r.drag_multiplier.to_string(),
            r.outcome.name().to_string(),
            r.air_reached.to_string(),
            r.exit_time.to_string(),
            r.exit_pitch.to_string(),
            r.exit_v_z.to_string(),
            r.exit_v_x.to_string(),
            r.max_pitch.to_string(),
            r.t_end.to_string(),
            r.diagnostics.clone(),
        ])?;
    }
    wr.flush()?;
    let mut w = wr.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    for line in sweep.aggregate_lines() {
        writeln!(w, "# {line}")?;
    }
    w.flush()?;
    Ok(())
}
