//! Event-located hybrid simulation, sensor synthesis, closed-loop runs and Monte-Carlo sweeps.

mod integrate;
mod montecarlo;
mod outcome;
mod run;
mod sensors;

pub use integrate::{
    hybrid_step, integrate_hybrid, rk4_step, HybridTrace, SimError, StepConfig, Transition, EVENT_TOL,
    MAX_TRANSITIONS_PER_PERIOD,
};
pub use montecarlo::{monte_carlo, write_summary, RunSummary, SweepSummary, SUMMARY_COLUMNS, SUMMARY_FORMAT};
pub use outcome::{classify_outcome, OutcomeLabel, OutcomeRules, OutcomeTracker};
pub use run::{closed_loop_run, write_trace, GateSample, SimConfig, SimTrace, TraceRow, TRACE_COLUMNS, TRACE_FORMAT};
pub use sensors::{simulate_sensors, PropModel, SensorConfig, SensorModel};
