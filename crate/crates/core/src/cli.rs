//! Command-line pipeline: optimize, synthesize gains, simulate and sweep.
//!
//! Each command reads the run configuration, applies its flag overrides, and writes
//! its artifacts plus the effective configuration (`config.toml`) to the output
//! directory. Exit codes: 0 success, 1 I/O error, 2 configuration or input
//! validation error, 3 solver error, 4 simulation error.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RunConfig};
use crate::control::{synthesize_gains, GainError, GainSchedule};
use crate::dynamics::VehicleParams;
use crate::sim::{closed_loop_run, monte_carlo, write_summary, write_trace, SimError};
use crate::trajopt::{optimize, NominalTrajectory, OptimizeError, TrajectoryError};

/// Name of the echoed configuration in every output directory.
pub const CONFIG_ECHO: &str = "config.toml";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SOLVER_REPORT_FILE: &str = "solver_report.txt";
pub const GAINS_FILE: &str = "gains.csv";
pub const GAINS_REPORT_FILE: &str = "gains_report.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Parser)]
#[command(name = "uaav", version, about = "Water-to-air transition pipeline for a delta-wing aerial-aquatic vehicle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize the nominal multi-phase trajectory.
    Optimize(OptimizeArgs),
    /// Synthesize the time-varying and guard-attracting gains along a trajectory.
    Gains(GainsArgs),
    /// Run one closed-loop simulation and write its trace.
    Simulate(SimulateArgs),
    /// Run a seeded sweep and write the per-run summary.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration; every key is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated mode names, or `water-only`; overrides the configured schedule.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Print solver iterations to standard error.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct GainsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Trajectory file written by `optimize`.
    #[arg(long)]
    pub traj: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Trajectory file written by `optimize`.
    #[arg(long)]
    pub traj: PathBuf,
    /// Gain file written by `gains`.
    #[arg(long)]
    pub gains: PathBuf,
    /// Seed of the run (first seed of a sweep).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drag multiplier of the simulated vehicle.
    #[arg(long)]
    pub drag: Option<f64>,
    /// Disable the guard-attracting controller after a tracking timeout.
    #[arg(long)]
    pub no_fallback: bool,
    /// Feed the true state and mode to the controller.
    #[arg(long)]
    pub truth_feedback: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Runs per grid point.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Parameter grid, e.g. `drag=1.0,1.2,1.4`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Worker threads; defaults to the available parallelism. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid input {path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("trajectory optimization failed: {0}")]
    Solver(String),
    #[error("gain synthesis failed: {0}")]
    Gains(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(ConfigError::Read { .. }) => 1,
            CliError::Config(_) | CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::Solver(_) | CliError::Gains(_) => 3,
            CliError::Simulation(_) => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(io_err(&path))
}

fn prepare_out(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(dir, CONFIG_ECHO, cfg.to_toml().as_bytes())
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>, CliError> {
    std::fs::File::open(path).map(BufReader::new).map_err(io_err(path))
}

/// Reads and validates a trajectory file.
pub fn load_trajectory(path: &Path, params: &VehicleParams) -> Result<NominalTrajectory, CliError> {
    NominalTrajectory::read_csv(open(path)?, params).map_err(|e| match e {
        TrajectoryError::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        e => CliError::Input { path: path.to_path_buf(), message: e.to_string() },
    })
}

/// Reads a gain file and checks that its phases match the trajectory.
pub fn load_gains(path: &Path, traj: &NominalTrajectory) -> Result<GainSchedule, CliError> {
    let gains = GainSchedule::read_csv(open(path)?).map_err(|e| match e {
        GainError::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        e => CliError::Input { path: path.to_path_buf(), message: e.to_string() },
    })?;
    let modes_match = gains.phases.len() == traj.phases.len()
        && gains.phases.iter().zip(&traj.phases).all(|(g, p)| g.mode == p.mode);
    if !modes_match {
        return Err(CliError::Input {
            path: path.to_path_buf(),
            message: "gain phases do not match the trajectory schedule".into(),
        });
    }
    Ok(gains)
}

fn parse_schedule(spec: &str) -> Result<Vec<String>, CliError> {
    let s = spec.trim().to_ascii_lowercase();
    if s == "water-only" || s == "water_only" {
        return Ok(vec!["water".into()]);
    }
    let names: Vec<String> = s.split(',').map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect();
    if names.is_empty() {
        return Err(CliError::Usage("--schedule needs at least one mode".into()));
    }
    Ok(names)
}

/// Parses `key=v1,v2,...`; only the drag multiplier can be swept.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>, CliError> {
    let (key, values) =
        spec.split_once('=').ok_or_else(|| CliError::Usage(format!("--sweep `{spec}`: expected key=v1,v2,...")))?;
    if !matches!(key.trim(), "drag" | "drag_multiplier") {
        return Err(CliError::Usage(format!("--sweep: unknown parameter `{}` (supported: drag)", key.trim())));
    }
    let grid = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| CliError::Usage(format!("--sweep value `{v}`: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if grid.is_empty() || grid.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(CliError::Usage("--sweep values must be finite and non-negative".into()));
    }
    Ok(grid)
}

fn apply_run_flags(cfg: &mut RunConfig, run: &RunArgs) -> Result<(), CliError> {
    if let Some(seed) = run.seed {
        cfg.sim.seed = seed;
    }
    if let Some(drag) = run.drag {
        cfg.sim.drag_multiplier = drag;
    }
    if run.no_fallback {
        cfg.sim.fallback = false;
    }
    if run.truth_feedback {
        cfg.sim.truth_feedback = true;
    }
    cfg.validate()?;
    Ok(())
}

/// Solves the configured trajectory problem and writes the trajectory and a solver report.
pub fn cmd_optimize(args: &OptimizeArgs) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?;
    if let Some(spec) = &args.schedule {
        let names = parse_schedule(spec)?;
        if names.len() != cfg.trajopt.knots.len() {
            let per_phase = cfg.trajopt.knots.first().copied().unwrap_or(20);
            cfg.trajopt.knots = vec![per_phase; names.len()];
        }
        cfg.trajopt.schedule = names;
        cfg.validate()?;
    }
    let problem = cfg.trajopt.problem()?;
    let opts = crate::trajopt::SqpOptions { verbose: args.verbose, ..cfg.trajopt.sqp_options() };
    prepare_out(&args.common.out, &cfg)?;
    let (traj, res) = optimize(&problem, &cfg.vehicle, &opts).map_err(|e| match e {
        OptimizeError::Problem(p) => CliError::Config(ConfigError::Invalid(format!("trajopt: {p}"))),
        OptimizeError::Solver(s) => CliError::Solver(s.to_string()),
    })?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv).map_err(|e| CliError::Solver(e.to_string()))?;
    write_file(&args.common.out, TRAJECTORY_FILE, &csv)?;

    let x_end = traj.final_state();
    let terminal_ok = (0..7).all(|i| (x_end[i] - problem.x_final[i]).abs() <= problem.delta_final[i] + 1e-9);
    let mut report = format!(
        "status = {:?}\ncost = {}\niterations = {}\nmax_violation = {:e}\nstationarity = {:e}\n",
        res.status, res.cost, res.iterations, res.max_violation, res.stationarity
    );
    for p in &traj.phases {
        report += &format!("phase {} intervals = {} duration = {}\n", p.mode.name(), p.intervals(), p.duration());
    }
    report += &format!("final_state = {:?}\n", x_end.as_slice());
    if problem.schedule.phases.last() == Some(&crate::dynamics::HybridMode::Air) {
        report += &format!("terminal_in_box = {terminal_ok}\n");
    }
    write_file(&args.common.out, SOLVER_REPORT_FILE, report.as_bytes())?;
    Ok(format!(
        "{:?}: cost {:.6} after {} iterations, max violation {:.2e}",
        res.status, res.cost, res.iterations, res.max_violation
    ))
}

/// Synthesizes gains along a trajectory and reports the cost-to-go eigenvalue range per phase.
pub fn cmd_gains(args: &GainsArgs) -> Result<String, CliError> {
    let cfg = RunConfig::load(args.common.config.as_deref())?;
    let traj = load_trajectory(&args.traj, &cfg.vehicle)?;
    prepare_out(&args.common.out, &cfg)?;
    let gains = synthesize_gains(&traj, &cfg.vehicle, &cfg.gain_options()).map_err(|e| CliError::Gains(e.to_string()))?;
    let mut csv = Vec::new();
    gains.write_csv(&mut csv).map_err(|e| CliError::Gains(e.to_string()))?;
    write_file(&args.common.out, GAINS_FILE, &csv)?;
    let lines: Vec<String> = gains
        .phases
        .iter()
        .map(|p| {
            let (lo, hi) = p.s_eigen_range();
            format!(
                "phase {}: duration {:.4} s, {} samples, S eigenvalues in [{:.6e}, {:.6e}]",
                p.mode.name(),
                p.duration,
                p.taus.len(),
                lo,
                hi
            )
        })
        .collect();
    let report = lines.join("\n") + "\n";
    write_file(&args.common.out, GAINS_REPORT_FILE, report.as_bytes())?;
    Ok(lines.join("\n"))
}

/// Runs one closed loop and writes its trace.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?;
    apply_run_flags(&mut cfg, &args.run)?;
    let traj = load_trajectory(&args.run.traj, &cfg.vehicle)?;
    let gains = load_gains(&args.run.gains, &traj)?;
    prepare_out(&args.common.out, &cfg)?;
    let sim = cfg.sim_config();
    let trace =
        closed_loop_run(&sim, &traj, &gains, &cfg.vehicle).map_err(|e: SimError| CliError::Simulation(e.to_string()))?;
    let mut csv = Vec::new();
    write_trace(&mut csv, &trace, sim.seed, sim.drag_multiplier).map_err(|e| CliError::Simulation(e.to_string()))?;
    write_file(&args.common.out, TRACE_FILE, &csv)?;
    if let Some(d) = &trace.diagnostics {
        return Err(CliError::Simulation(format!("seed {}: {d}", sim.seed)));
    }
    let exit = trace.air_entry().map_or("none".to_string(), |e| {
        format!("t={:.4} pitch={:.4} v_z={:.4}", e.t, e.x[2], e.x[5])
    });
    Ok(format!(
        "outcome {:?} seed={} drag_multiplier={} air_entry {} t_end={:.3}",
        trace.outcome,
        sim.seed,
        sim.drag_multiplier,
        exit,
        trace.rows.last().map_or(0.0, |r| r.t)
    ))
}

/// Runs a seeded sweep and writes the per-run summary with its aggregate block.
pub fn cmd_montecarlo(args: &MonteCarloArgs) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(args.common.config.as_deref())?;
    apply_run_flags(&mut cfg, &args.run)?;
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let grid = match &args.sweep {
        Some(spec) => parse_sweep(spec)?,
        None => vec![cfg.sim.drag_multiplier],
    };
    let traj = load_trajectory(&args.run.traj, &cfg.vehicle)?;
    let gains = load_gains(&args.run.gains, &traj)?;
    prepare_out(&args.common.out, &cfg)?;
    let threads = args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let sweep = monte_carlo(&cfg.sim_config(), args.runs, &grid, &traj, &gains, &cfg.vehicle, threads);
    let mut csv = Vec::new();
    write_summary(&mut csv, &sweep).map_err(|e| CliError::Simulation(e.to_string()))?;
    write_file(&args.common.out, SUMMARY_FILE, &csv)?;
    Ok(sweep.aggregate_lines().join("\n"))
}

/// Dispatches a parsed command line; returns the text for standard output.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Optimize(a) => cmd_optimize(a),
        Command::Gains(a) => cmd_gains(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            println!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("drag=1.0,1.2").unwrap(), vec![1.0, 1.2]);
        assert_eq!(parse_sweep("drag_multiplier=1.3").unwrap(), vec![1.3]);
        assert_eq!(parse_sweep("noise=1").unwrap_err().exit_code(), 2);
        assert_eq!(parse_sweep("drag=a").unwrap_err().exit_code(), 2);
        assert_eq!(parse_sweep("drag").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(parse_schedule("water-only").unwrap(), vec!["water".to_string()]);
        assert_eq!(parse_schedule("water, transition_exit,air").unwrap().len(), 3);
        assert!(parse_schedule(" , ").is_err());
    }

    #[test]
    fn command_line_shapes() {
        let cli = Cli::try_parse_from([
            "uaav", "montecarlo", "--out", "o", "--traj", "t.csv", "--gains", "g.csv", "--runs", "10", "--sweep",
            "drag=1.0,1.2", "--no-fallback",
        ])
        .unwrap();
        let Command::Montecarlo(a) = cli.command else { panic!("wrong command") };
        assert_eq!(a.runs, 10);
        assert!(a.run.no_fallback);
        assert!(Cli::try_parse_from(["uaav", "simulate", "--out", "o"]).is_err());
    }
}
