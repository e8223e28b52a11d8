use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::collocation::{hermite_simpson_defect_with, stage_cost};
use super::nlp::{Block, Nlp};
use super::trajectory::{NominalTrajectory, TrajPhase};
use crate::dynamics::{dynamics, guard_psi1, guard_psi2, HybridMode, VehicleParams, STATE_NAMES};
use crate::linalg::{Vec2, Vec7};

/// Ordered phases with the number of collocation intervals in each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSchedule {
    pub phases: Vec<HybridMode>,
    pub knots: Vec<usize>,
}

impl ModeSchedule {
    pub fn water_exit() -> Self {
        ModeSchedule {
            phases: vec![HybridMode::Water, HybridMode::TransitionExit, HybridMode::Air],
            knots: vec![20, 8, 20],
        }
    }

    pub fn water_only(knots: usize) -> Self {
        ModeSchedule { phases: vec![HybridMode::Water], knots: vec![knots] }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.phases.is_empty() {
            return Err(ProblemError::Schedule("schedule has no phases".into()));
        }
        if self.phases.len() != self.knots.len() {
            return Err(ProblemError::Schedule(format!(
                "{} phases but {} knot counts",
                self.phases.len(),
                self.knots.len()
            )));
        }
        if let Some(j) = self.knots.iter().position(|&n| n == 0) {
            return Err(ProblemError::Schedule(format!("phase {j} has no intervals")));
        }
        for w in self.phases.windows(2) {
            if !w[0].is_adjacent(w[1]) {
                return Err(ProblemError::Schedule(format!("no guard connects {} to {}", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn total_intervals(&self) -> usize {
        self.knots.iter().sum()
    }
}

/// Guard a mode leaves through on the way out of the water.
pub fn exit_guard(mode: HybridMode) -> Option<u8> {
    match mode {
        HybridMode::Water => Some(1),
        HybridMode::TransitionExit => Some(2),
        HybridMode::Air | HybridMode::TransitionEntry => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajOptProblem {
    pub schedule: ModeSchedule,
    pub x_init: Vec7,
    pub delta_init: Vec7,
    pub x_final: Vec7,
    pub delta_final: Vec7,
    pub x_lower: Vec7,
    pub x_upper: Vec7,
    pub u_lower: Vec2,
    pub u_upper: Vec2,
    pub h_min: f64,
    pub h_max: f64,
    pub r: Matrix2<f64>,
    pub d: f64,
}

impl Default for TrajOptProblem {
    fn default() -> Self {
        TrajOptProblem {
            schedule: ModeSchedule::water_exit(),
            x_init: Vec7::from([-3.5, -1.0, 0.0, 0.0, 0.5, 0.0, 0.0]),
            delta_init: Vec7::from([0.5, 0.1, 0.05, 0.0, 0.0, 0.0, 0.0]),
            x_final: Vec7::from([0.0, 1.0, 0.0, 0.0, 10.0, 0.0, 0.0]),
            delta_final: Vec7::from([2.0, 0.5, 0.15, std::f64::consts::FRAC_PI_2, 2.0, 2.0, 10.0]),
            x_lower: Vec7::repeat(-10.0),
            x_upper: Vec7::repeat(10.0),
            u_lower: Vec2::new(-10.0, 0.0),
            u_upper: Vec2::new(10.0, 5.0),
            h_min: 1e-3,
            h_max: 0.25,
            r: Matrix2::identity(),
            d: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("empty box for {what}: components {components:?}")]
    EmptyBox { what: String, components: Vec<String> },
}

enum BlockKind {
    Interval { phase: usize },
    Containment { rows: Vec<(u8, f64)> },
    #[cfg_attr(not(test), allow(dead_code))]
    GuardEquality { k: usize, guard: u8 },
}

/// Direct-transcription NLP over all knots of a multi-phase schedule.
///
/// Variables are laid out knot by knot as `(x_k, u_k)` followed by one step
/// length per phase.
pub struct CollocationNlp {
    pub problem: TrajOptProblem,
    pub params: VehicleParams,
    /// Global index of each phase's first knot.
    pub phase_start: Vec<usize>,
    pub n_knots: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    blocks: Vec<Block>,
    kinds: Vec<BlockKind>,
    eq_labels: Vec<String>,
    ineq_labels: Vec<String>,
}

pub const KNOT_STRIDE: usize = 9;

fn guard_value(g: u8, x: &Vec7, params: &VehicleParams) -> f64 {
    if g == 1 {
        guard_psi1(x, params)
    } else {
        guard_psi2(x, params)
    }
}

fn intersect(
    lo: &mut [f64],
    hi: &mut [f64],
    box_lo: &Vec7,
    box_hi: &Vec7,
    what: &str,
) -> Result<(), ProblemError> {
    let mut bad = Vec::new();
    for i in 0..7 {
        lo[i] = lo[i].max(box_lo[i]);
        hi[i] = hi[i].min(box_hi[i]);
        if lo[i] > hi[i] || lo[i].is_nan() || hi[i].is_nan() {
            bad.push(STATE_NAMES[i].to_string());
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(ProblemError::EmptyBox { what: what.to_string(), components: bad })
    }
}

impl CollocationNlp {
    pub fn state_index(&self, k: usize) -> usize {
        KNOT_STRIDE * k
    }

    pub fn input_index(&self, k: usize) -> usize {
        KNOT_STRIDE * k + 7
    }

    pub fn step_index(&self, phase: usize) -> usize {
        KNOT_STRIDE * self.n_knots + phase
    }

    pub fn phase_of_knot(&self, k: usize) -> usize {
        self.phase_start.iter().rposition(|&s| s <= k).unwrap_or(0).min(self.problem.schedule.phases.len() - 1)
    }

    /// Straight-line guess from `x_init` to `x_final` with mid-range controls and steps.
    pub fn straight_line_guess(&self) -> Vec<f64> {
        let p = &self.problem;
        let mut z = vec![0.0; self.num_vars()];
        let last = (self.n_knots - 1).max(1) as f64;
        let u_mid = (p.u_lower + p.u_upper) * 0.5;
        for k in 0..self.n_knots {
            let s = k as f64 / last;
            let x = p.x_init * (1.0 - s) + p.x_final * s;
            z[self.state_index(k)..self.state_index(k) + 7].copy_from_slice(x.as_slice());
            z[self.input_index(k)..self.input_index(k) + 2].copy_from_slice(u_mid.as_slice());
        }
        for j in 0..p.schedule.phases.len() {
            z[self.step_index(j)] = 0.5 * (p.h_min + p.h_max);
        }
        z
    }

    /// Decision vector sampled from an existing trajectory with the same schedule shape.
    pub fn guess_from_trajectory(&self, traj: &NominalTrajectory) -> Option<Vec<f64>> {
        let sched = &self.problem.schedule;
        if traj.phases.len() != sched.phases.len() {
            return None;
        }
        let mut z = vec![0.0; self.num_vars()];
        for (j, ph) in traj.phases.iter().enumerate() {
            let n = sched.knots[j];
            let dur = ph.duration();
            for i in 0..=n {
                let tau = dur * i as f64 / n as f64;
                let s = traj.sample_phase(j, tau);
                let k = self.phase_start[j] + i;
                z[self.state_index(k)..self.state_index(k) + 7].copy_from_slice(s.x.as_slice());
                z[self.input_index(k)..self.input_index(k) + 2].copy_from_slice(s.u.as_slice());
            }
            z[self.step_index(j)] = dur / n as f64;
        }
        Some(z)
    }

    pub fn to_trajectory(&self, z: &[f64]) -> NominalTrajectory {
        let sched = &self.problem.schedule;
        let mut phases = Vec::with_capacity(sched.phases.len());
        let mut t0 = 0.0;
        for (j, &mode) in sched.phases.iter().enumerate() {
            let h = z[self.step_index(j)];
            let ks = self.phase_start[j]..=self.phase_start[j] + sched.knots[j];
            let states: Vec<Vec7> =
                ks.clone().map(|k| Vec7::from_column_slice(&z[self.state_index(k)..self.state_index(k) + 7])).collect();
            let controls: Vec<Vec2> =
                ks.map(|k| Vec2::from_column_slice(&z[self.input_index(k)..self.input_index(k) + 2])).collect();
            phases.push(TrajPhase::new(mode, h, t0, states, controls, &self.params));
            t0 += h * sched.knots[j] as f64;
        }
        NominalTrajectory { phases, meta: Default::default() }
    }
}

/// Assembles the transcription of `p` for the vehicle `params`.
pub fn build_problem(p: &TrajOptProblem, params: &VehicleParams) -> Result<CollocationNlp, ProblemError> {
    p.schedule.validate()?;
    if !(p.h_min > 0.0 && p.h_min <= p.h_max) {
        return Err(ProblemError::EmptyBox { what: "step bounds".into(), components: vec!["h".into()] });
    }
    let mut bad_u = Vec::new();
    for i in 0..2 {
        if !(p.u_lower[i] <= p.u_upper[i]) {
            bad_u.push(crate::dynamics::INPUT_NAMES[i].to_string());
        }
    }
    if !bad_u.is_empty() {
        return Err(ProblemError::EmptyBox { what: "input bounds".into(), components: bad_u });
    }
    let sched = &p.schedule;
    let n_phases = sched.phases.len();
    let mut phase_start = Vec::with_capacity(n_phases);
    let mut k0 = 0;
    for &n in &sched.knots {
        phase_start.push(k0);
        k0 += n;
    }
    let n_knots = k0 + 1;
    let n_vars = KNOT_STRIDE * n_knots + n_phases;

    let mut lower = vec![0.0; n_vars];
    let mut upper = vec![0.0; n_vars];
    for k in 0..n_knots {
        let xs = KNOT_STRIDE * k;
        let (lo, hi) = (&mut lower[xs..xs + 9], &mut upper[xs..xs + 9]);
        lo[..7].copy_from_slice(p.x_lower.as_slice());
        hi[..7].copy_from_slice(p.x_upper.as_slice());
        lo[7..].copy_from_slice(p.u_lower.as_slice());
        hi[7..].copy_from_slice(p.u_upper.as_slice());
    }
    let mut bad_x = Vec::new();
    for i in 0..7 {
        if !(p.x_lower[i] <= p.x_upper[i]) {
            bad_x.push(STATE_NAMES[i].to_string());
        }
    }
    if !bad_x.is_empty() {
        return Err(ProblemError::EmptyBox { what: "state bounds".into(), components: bad_x });
    }
    {
        let (lo, hi) = (&mut lower[..7], &mut upper[..7]);
        intersect(lo, hi, &(p.x_init - p.delta_init), &(p.x_init + p.delta_init), "initial state")?;
    }
    let final_mode = *sched.phases.last().unwrap();
    let terminal_guard = if final_mode == HybridMode::Air { None } else { exit_guard(final_mode) };
    if terminal_guard.is_none() {
        let xs = KNOT_STRIDE * (n_knots - 1);
        let (lo, hi) = (&mut lower[xs..xs + 7], &mut upper[xs..xs + 7]);
        intersect(lo, hi, &(p.x_final - p.delta_final), &(p.x_final + p.delta_final), "final state")?;
    }
    for j in 0..n_phases {
        lower[KNOT_STRIDE * n_knots + j] = p.h_min;
        upper[KNOT_STRIDE * n_knots + j] = p.h_max;
    }

    let mut blocks = Vec::new();
    let mut kinds = Vec::new();
    let mut eq_labels = Vec::new();
    let mut ineq_labels = Vec::new();
    let state_vars = |k: usize| (KNOT_STRIDE * k..KNOT_STRIDE * k + 7).collect::<Vec<_>>();

    for k in 0..n_knots {
        // guard-sign containment for every phase that owns this knot
        let mut rows: Vec<(u8, f64)> = Vec::new();
        for (j, &mode) in sched.phases.iter().enumerate() {
            let (start, end) = (phase_start[j], phase_start[j] + sched.knots[j]);
            if k < start || k > end {
                continue;
            }
            let (nose_up, tail_up) = mode.signature();
            for (g, up) in [(1u8, nose_up), (2u8, tail_up)] {
                let skip_start = j > 0 && k == start && sched.phases[j - 1].shared_guard(mode) == Some(g);
                let skip_end = j + 1 < n_phases && k == end && mode.shared_guard(sched.phases[j + 1]) == Some(g);
                let skip_terminal = j + 1 == n_phases && k == end && terminal_guard == Some(g);
                if skip_start || skip_end || skip_terminal {
                    continue;
                }
                let row = (g, if up { -1.0 } else { 1.0 });
                if !rows.contains(&row) {
                    rows.push(row);
                }
            }
        }
        if !rows.is_empty() {
            for &(g, sign) in &rows {
                ineq_labels.push(format!("knot {k} guard psi{g} sign {}", if sign > 0.0 { "<= 0" } else { ">= 0" }));
            }
            blocks.push(Block { vars: state_vars(k), n_eq: 0, n_ineq: rows.len(), stage: k as f64 + 0.25 });
            kinds.push(BlockKind::Containment { rows });
        }
        // guard equality at phase boundaries
        for j in 0..n_phases {
            let end = phase_start[j] + sched.knots[j];
            if k != end {
                continue;
            }
            let guard = if j + 1 < n_phases { sched.phases[j].shared_guard(sched.phases[j + 1]) } else { terminal_guard };
            if let Some(g) = guard {
                eq_labels.push(format!("knot {k} guard psi{g} = 0 (end of phase {j})"));
                blocks.push(Block { vars: state_vars(k), n_eq: 1, n_ineq: 0, stage: k as f64 + 0.25 });
                kinds.push(BlockKind::GuardEquality { k, guard: g });
            }
        }
        // collocation interval to the next knot
        if k + 1 < n_knots {
            let j = phase_start.iter().rposition(|&s| s <= k).unwrap();
            let mut vars: Vec<usize> = (KNOT_STRIDE * k..KNOT_STRIDE * (k + 2)).collect();
            vars.push(KNOT_STRIDE * n_knots + j);
            for name in STATE_NAMES {
                eq_labels.push(format!("defect phase {j} knot {k} {name}"));
            }
            blocks.push(Block { vars, n_eq: 7, n_ineq: 0, stage: k as f64 + 0.5 });
            kinds.push(BlockKind::Interval { phase: j });
        }
    }

    Ok(CollocationNlp {
        problem: p.clone(),
        params: params.clone(),
        phase_start,
        n_knots,
        lower,
        upper,
        blocks,
        kinds,
        eq_labels,
        ineq_labels,
    })
}

impl Nlp for CollocationNlp {
    fn num_vars(&self) -> usize {
        self.lower.len()
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

    fn eval_block(&self, b: usize, local: &[f64], eq: &mut [f64], ineq: &mut [f64]) -> f64 {
        match &self.kinds[b] {
            BlockKind::Interval { phase, .. } => {
                let mode = self.problem.schedule.phases[*phase];
                let x_k = Vec7::from_column_slice(&local[0..7]);
                let u_k = Vec2::from_column_slice(&local[7..9]);
                let x_k1 = Vec7::from_column_slice(&local[9..16]);
                let u_k1 = Vec2::from_column_slice(&local[16..18]);
                let h = local[18];
                let d = hermite_simpson_defect_with(|x, u| dynamics(x, u, mode, &self.params), &x_k, &x_k1, &u_k, &u_k1, h);
                eq.copy_from_slice(d.as_slice());
                stage_cost(&u_k, h, &self.problem.r, self.problem.d)
            }
            BlockKind::Containment { rows, .. } => {
                let x = Vec7::from_column_slice(local);
                for (out, &(g, sign)) in ineq.iter_mut().zip(rows) {
                    *out = sign * guard_value(g, &x, &self.params);
                }
                0.0
            }
            BlockKind::GuardEquality { guard, .. } => {
                let x = Vec7::from_column_slice(local);
                eq[0] = guard_value(*guard, &x, &self.params);
                0.0
            }
        }
    }

    fn var_stage(&self, i: usize) -> f64 {
        if i < KNOT_STRIDE * self.n_knots {
            (i / KNOT_STRIDE) as f64
        } else {
            1e12 + i as f64
        }
    }

    fn row_label(&self, eq: bool, row: usize) -> String {
        let labels = if eq { &self.eq_labels } else { &self.ineq_labels };
        labels.get(row).cloned().unwrap_or_else(|| format!("row {row}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajopt::nlp::{eval_values, RowLayout};

    #[test]
    fn water_only_counts() {
        let p = TrajOptProblem { schedule: ModeSchedule::water_only(10), ..Default::default() };
        let nlp = build_problem(&p, &VehicleParams::default()).unwrap();
        assert_eq!(nlp.num_vars(), 100);
        let n_defects: usize =
            nlp.kinds.iter().filter(|k| matches!(k, BlockKind::Interval { .. })).count() * 7;
        assert_eq!(n_defects, 70);
    }

    #[test]
    fn water_exit_has_one_guard_equality_per_boundary() {
        let nlp = build_problem(&TrajOptProblem::default(), &VehicleParams::default()).unwrap();
        let guards: Vec<(usize, u8)> = nlp
            .kinds
            .iter()
            .filter_map(|k| match k {
                BlockKind::GuardEquality { k, guard } => Some((*k, *guard)),
                _ => None,
            })
            .collect();
        assert_eq!(guards, vec![(20, 1), (28, 2)]);
        assert_eq!(nlp.num_vars(), 49 * 9 + 3);
    }

    #[test]
    fn straight_line_guess_evaluates_finite() {
        let nlp = build_problem(&TrajOptProblem::default(), &VehicleParams::default()).unwrap();
        let z = nlp.straight_line_guess();
        let layout = RowLayout::new(nlp.blocks());
        assert!(eval_values(&nlp, &layout, &z).is_finite());
    }

    #[test]
    fn inconsistent_boxes_are_reported() {
        let mut p = TrajOptProblem::default();
        p.x_init[1] = -20.0;
        match build_problem(&p, &VehicleParams::default()) {
            Err(ProblemError::EmptyBox { components, .. }) => assert_eq!(components, vec!["r_z".to_string()]),
            other => panic!("unexpected {:?}", other.err()),
        }
    }

    #[test]
    fn non_adjacent_schedule_rejected() {
        let p = TrajOptProblem {
            schedule: ModeSchedule { phases: vec![HybridMode::Water, HybridMode::Air], knots: vec![5, 5] },
            ..Default::default()
        };
        assert!(matches!(build_problem(&p, &VehicleParams::default()), Err(ProblemError::Schedule(_))));
    }
}
