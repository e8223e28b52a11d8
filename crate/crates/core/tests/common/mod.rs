//! Shared fixtures: the nominal water-exit pipeline is solved once per test binary.

#![allow(dead_code)]

use std::sync::OnceLock;

use uaav::config::RunConfig;
use uaav::control::{synthesize_gains, GainSchedule};
use uaav::dynamics::VehicleParams;
use uaav::sim::SimConfig;
use uaav::trajopt::{optimize, NominalTrajectory, SqpResult, TrajOptProblem};

pub struct Pipeline {
    pub config: RunConfig,
    pub params: VehicleParams,
    pub problem: TrajOptProblem,
    pub traj: NominalTrajectory,
    pub result: SqpResult,
    pub gains: GainSchedule,
    pub solve_seconds: f64,
}

impl Pipeline {
    pub fn sim(&self) -> SimConfig {
        self.config.sim_config()
    }
}

/// Default configuration taken through optimization and gain synthesis.
pub fn pipeline() -> &'static Pipeline {
    static CELL: OnceLock<Pipeline> = OnceLock::new();
    CELL.get_or_init(|| {
        let config = RunConfig::default();
        let params = config.vehicle.clone();
        let problem = config.trajopt.problem().expect("default problem");
        let start = std::time::Instant::now();
        let (traj, result) = optimize(&problem, &params, &config.trajopt.sqp_options()).expect("nominal solve");
        let solve_seconds = start.elapsed().as_secs_f64();
        let gains = synthesize_gains(&traj, &params, &config.gain_options()).expect("nominal gains");
        Pipeline { config, params, problem, traj, result, gains, solve_seconds }
    })
}

use nalgebra::{SVector, Vector1, Vector2};
use uaav::trajopt::hermite_simpson_defect_with;
use uaav::trajopt::nlp::{Block, Nlp};

/// Minimum-effort double integrator `p'' = u` on `[0, 1]` from rest at 0 to rest at 1,
/// transcribed on `n` intervals. Knot `k` holds `(p, v, u)` at variables `3k..3k + 3`.
pub struct DoubleIntegrator {
    pub n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    blocks: Vec<Block>,
}

/// Closed-form optimum: `u = 6 - 12 t`, cost `int u^2 dt = 12`.
pub const DOUBLE_INTEGRATOR_COST: f64 = 12.0;

impl DoubleIntegrator {
    pub fn new(n: usize) -> Self {
        let nv = 3 * (n + 1);
        let mut blocks: Vec<Block> = (0..n)
            .map(|k| Block { vars: (3 * k..3 * k + 6).collect(), n_eq: 2, n_ineq: 0, stage: k as f64 + 0.5 })
            .collect();
        blocks.push(Block { vars: vec![0, 1], n_eq: 2, n_ineq: 0, stage: 0.0 });
        blocks.push(Block { vars: vec![3 * n, 3 * n + 1], n_eq: 2, n_ineq: 0, stage: n as f64 });
        DoubleIntegrator { n, lower: vec![-1e3; nv], upper: vec![1e3; nv], blocks }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn zero_guess(&self) -> Vec<f64> {
        vec![0.0; 3 * (self.n + 1)]
    }

    /// Exact optimum sampled at the knots.
    pub fn exact(&self) -> Vec<f64> {
        (0..=self.n)
            .flat_map(|k| {
                let t = k as f64 * self.h();
                [3.0 * t * t - 2.0 * t * t * t, 6.0 * t - 6.0 * t * t, 6.0 - 12.0 * t]
            })
            .collect()
    }
}

impl Nlp for DoubleIntegrator {
    fn num_vars(&self) -> usize {
        3 * (self.n + 1)
    }
    fn lower(&self) -> &[f64] {
        &self.lower
    }
    fn upper(&self) -> &[f64] {
        &self.upper
    }
    fn blocks(&self) -> &[Block] {
        &self.blocks
    }
    fn var_stage(&self, i: usize) -> f64 {
        (i / 3) as f64
    }
    fn eval_block(&self, b: usize, z: &[f64], eq: &mut [f64], _ineq: &mut [f64]) -> f64 {
        if b == self.n {
            eq[0] = z[0];
            eq[1] = z[1];
            return 0.0;
        }
        if b == self.n + 1 {
            eq[0] = z[0] - 1.0;
            eq[1] = z[1];
            return 0.0;
        }
        let h = self.h();
        let f = |x: &SVector<f64, 2>, u: &SVector<f64, 1>| Vector2::new(x[1], u[0]);
        let d = hermite_simpson_defect_with(
            f,
            &Vector2::new(z[0], z[1]),
            &Vector2::new(z[3], z[4]),
            &Vector1::new(z[2]),
            &Vector1::new(z[5]),
            h,
        );
        eq[0] = d[0];
        eq[1] = d[1];
        // Simpson quadrature of u^2 with the linear control interpolant
        let uc = 0.5 * (z[2] + z[5]);
        h / 6.0 * (z[2] * z[2] + 4.0 * uc * uc + z[5] * z[5])
    }
}
