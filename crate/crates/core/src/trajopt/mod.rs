//! Multi-phase Hermite-Simpson trajectory optimization over a fixed mode schedule.

mod collocation;
pub mod nlp;
mod problem;
pub mod qp;
pub mod skyline;
mod sqp;
mod trajectory;

pub use collocation::{hermite_simpson_defect, hermite_simpson_defect_with, stage_cost, CollocationError};
pub use problem::{build_problem, exit_guard, CollocationNlp, ModeSchedule, ProblemError, TrajOptProblem};
pub use sqp::{solve, SqpError, SqpOptions, SqpResult, SqpStatus};
pub use trajectory::{NominalTrajectory, Sample, TrajMeta, TrajPhase, TrajectoryError, TRAJECTORY_FORMAT};

use crate::dynamics::VehicleParams;

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SqpError),
}

/// Builds and solves the transcription from the straight-line guess.
pub fn optimize(
    problem: &TrajOptProblem,
    params: &VehicleParams,
    opts: &SqpOptions,
) -> Result<(NominalTrajectory, SqpResult), OptimizeError> {
    let nlp = build_problem(problem, params)?;
    let guess = nlp.straight_line_guess();
    let res = solve(&nlp, &guess, opts)?;
    let mut traj = nlp.to_trajectory(&res.z);
    traj.meta = TrajMeta { cost: res.cost, iterations: res.iterations, max_violation: res.max_violation };
    Ok((traj, res))
}
