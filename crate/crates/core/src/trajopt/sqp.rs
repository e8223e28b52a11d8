//! Sequential quadratic programming with an l1 merit line search.
//!
//! The Lagrangian Hessian is approximated element by element with damped BFGS
//! updates (partitioned quasi-Newton), which preserves the block sparsity of the
//! problem. Subproblems are solved in elastic form so an inconsistent
//! linearization never stalls the iteration.

use nalgebra::{DMatrix, DVector};

use super::nlp::{
    assemble_gradient, eval_derivatives, eval_values, jacobian_transpose_product, Evaluation, Nlp, RowLayout, Values,
};
use super::qp::{solve_qp, KktStructure, QpError, QpInput, QpOptions, QpSolution};

#[derive(Debug, Clone)]
pub struct SqpOptions {
    /// Maximum constraint violation at convergence.
    pub feas_tol: f64,
    /// Scaled KKT stationarity and complementarity at convergence.
    pub opt_tol: f64,
    /// Looser stationarity accepted once the merit function stops improving.
    pub acceptable_tol: f64,
    /// Consecutive stalled iterations at the acceptable level before stopping.
    pub acceptable_iter: usize,
    pub max_iter: usize,
    pub qp: QpOptions,
    /// Initial elastic penalty; raised when linearizations stay inconsistent.
    pub penalty_init: f64,
    pub penalty_max: f64,
    /// Print one line per iteration to standard error.
    pub verbose: bool,
}

impl Default for SqpOptions {
    fn default() -> Self {
        SqpOptions {
            feas_tol: 1e-6,
            opt_tol: 1e-4,
            acceptable_tol: 1e-2,
            acceptable_iter: 8,
            max_iter: 1500,
            qp: QpOptions::default(),
            penalty_init: 10.0,
            penalty_max: 1e7,
            verbose: false,
        }
    }
}

/// How the iteration terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqpStatus {
    /// Feasibility and optimality tolerances met.
    Optimal,
    /// Feasible and near-stationary, with no further merit progress.
    Acceptable,
}

#[derive(Debug, Clone)]
pub struct SqpResult {
    pub status: SqpStatus,
    pub z: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub max_violation: f64,
    pub stationarity: f64,
    pub y_eq: Vec<f64>,
    pub lam_ineq: Vec<f64>,
    /// Merit value before and after every accepted step, at that step's penalty.
    pub merit_steps: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SqpError {
    #[error("initial guess has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("problem functions are not finite at the initial guess")]
    NonFiniteStart,
    #[error("quadratic subproblem failed: {0}")]
    Qp(#[from] QpError),
    #[error(
        "no convergence after {iterations} iterations: worst constraint {worst} violated by {violation:.3e} \
         (stationarity {stationarity:.3e})"
    )]
    NotConverged { iterations: usize, worst: String, violation: f64, stationarity: f64, z: Vec<f64> },
}

struct Measures {
    violation: f64,
    stationarity: f64,
    complementarity: f64,
}

struct Solver<'a, P: Nlp + ?Sized> {
    nlp: &'a P,
    layout: RowLayout,
    kkt: KktStructure,
    lo: Vec<f64>,
    hi: Vec<f64>,
    opts: &'a SqpOptions,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl<P: Nlp + ?Sized> Solver<'_, P> {
    fn n(&self) -> usize {
        self.lo.len()
    }

    fn solve_subproblem(
        &self,
        z: &[f64],
        eval: &Evaluation,
        hess: &[DMatrix<f64>],
        c_eq: &[f64],
        c_ineq: &[f64],
        rho: f64,
        prox: f64,
    ) -> Result<QpSolution, QpError> {
        let grad = assemble_gradient(self.nlp.blocks(), &eval.grad, self.n());
        let lo: Vec<f64> = self.lo.iter().zip(z).map(|(l, z)| l - z).collect();
        let hi: Vec<f64> = self.hi.iter().zip(z).map(|(h, z)| h - z).collect();
        let input = QpInput {
            blocks: self.nlp.blocks(),
            layout: &self.layout,
            hess,
            reg: 1e-8 + prox,
            grad: &grad,
            jac: &eval.jac,
            c_eq,
            c_ineq,
            lo: &lo,
            hi: &hi,
            rho,
        };
        solve_qp(&self.kkt, &input, &self.opts.qp)
    }

    /// Constraint values predicted by the linearization at step `d`.
    fn linearized(&self, eval: &Evaluation, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut eq = eval.values.eq.clone();
        let mut ineq = eval.values.ineq.clone();
        for (b, blk) in self.nlp.blocks().iter().enumerate() {
            let j = &eval.jac[b];
            for r in 0..blk.n_eq + blk.n_ineq {
                let s: f64 = blk.vars.iter().enumerate().map(|(c, &i)| j[(r, c)] * d[i]).sum();
                if r < blk.n_eq {
                    eq[self.layout.eq_start[b] + r] += s;
                } else {
                    ineq[self.layout.ineq_start[b] + r - blk.n_eq] += s;
                }
            }
        }
        (eq, ineq)
    }

    fn lagrangian_gradients(&self, eval: &Evaluation, y_eq: &[f64], lam: &[f64]) -> Vec<DVector<f64>> {
        self.nlp
            .blocks()
            .iter()
            .enumerate()
            .map(|(b, blk)| {
                let j = &eval.jac[b];
                DVector::from_fn(blk.vars.len(), |c, _| {
                    let mut g = eval.grad[b][c];
                    for r in 0..blk.n_eq {
                        g -= y_eq[self.layout.eq_start[b] + r] * j[(r, c)];
                    }
                    for r in 0..blk.n_ineq {
                        g += lam[self.layout.ineq_start[b] + r] * j[(blk.n_eq + r, c)];
                    }
                    g
                })
            })
            .collect()
    }

    fn measures(&self, eval: &Evaluation, qp: &QpSolution, prox: f64) -> Measures {
        let (y_eq, lam) = (&qp.y_eq, &qp.lam_ineq);
        let n = self.n();
        let grad = assemble_gradient(self.nlp.blocks(), &eval.grad, n);
        let neg_lam: Vec<f64> = lam.iter().map(|v| -v).collect();
        let jty = jacobian_transpose_product(self.nlp.blocks(), &self.layout, &eval.jac, y_eq, &neg_lam, n);
        let mut stat = 0.0f64;
        for i in 0..n {
            if self.kkt.var_free[i].is_none() {
                continue;
            }
            // the proximal damping is not part of the model, so its contribution is removed
            stat = stat.max((grad[i] - jty[i] - qp.z_lo[i] + qp.z_hi[i] + prox * qp.d[i]).abs());
        }
        let m = (y_eq.len() + lam.len()).max(1) as f64;
        let mult_mean = (y_eq.iter().map(|v| v.abs()).sum::<f64>() + lam.iter().map(|v| v.abs()).sum::<f64>()) / m;
        let scale = (mult_mean / 100.0).max(1.0);
        let complementarity = lam
            .iter()
            .zip(&eval.values.ineq)
            .fold(0.0f64, |acc, (l, c)| acc.max((l * c).abs()));
        Measures {
            violation: eval.values.max_violation(),
            stationarity: stat / scale,
            complementarity: complementarity / scale,
        }
    }

    fn worst_constraint(&self, v: &Values) -> String {
        let mut best = (0.0, String::from("none"));
        for (i, c) in v.eq.iter().enumerate() {
            if c.abs() > best.0 {
                best = (c.abs(), self.nlp.row_label(true, i));
            }
        }
        for (i, c) in v.ineq.iter().enumerate() {
            if *c > best.0 {
                best = (*c, self.nlp.row_label(false, i));
            }
        }
        best.1
    }
}

fn bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, initialized: &mut bool) {
    let ss = s.dot(s);
    if ss < 1e-24 {
        return;
    }
    let sy = s.dot(y);
    if !*initialized && sy > 1e-12 * ss.sqrt() * y.norm() && sy > 0.0 {
        let gamma = (y.dot(y) / sy).clamp(1e-6, 1e6);
        b.fill_with_identity();
        *b *= gamma;
        *initialized = true;
    }
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 0.0 {
        return;
    }
    let r = if sy >= 0.2 * sbs {
        y.clone()
    } else {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    if sr <= 1e-16 * sbs {
        return;
    }
    *b += &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
    let sym = (&*b + b.transpose()) * 0.5;
    *b = sym;
}

/// Minimizes the NLP from `guess`. The guess is projected onto the variable bounds first.
pub fn solve<P: Nlp + ?Sized>(nlp: &P, guess: &[f64], opts: &SqpOptions) -> Result<SqpResult, SqpError> {
    let n = nlp.num_vars();
    if guess.len() != n {
        return Err(SqpError::Dimension { expected: n, got: guess.len() });
    }
    let lo = nlp.lower().to_vec();
    let hi = nlp.upper().to_vec();
    let fixed: Vec<bool> = lo.iter().zip(&hi).map(|(l, h)| h - l <= 1e-14 * (1.0 + l.abs())).collect();
    let layout = RowLayout::new(nlp.blocks());
    let stages: Vec<f64> = (0..n).map(|i| nlp.var_stage(i)).collect();
    let kkt = KktStructure::new(nlp.blocks(), &layout, &stages, &fixed);
    let solver = Solver { nlp, layout, kkt, lo: lo.clone(), hi: hi.clone(), opts };

    let mut z: Vec<f64> = guess.iter().zip(lo.iter().zip(&hi)).map(|(g, (l, h))| g.clamp(*l, *h)).collect();
    let mut eval = eval_derivatives(nlp, &solver.layout, &z);
    if !eval.values.is_finite() {
        return Err(SqpError::NonFiniteStart);
    }
    let mut hess: Vec<DMatrix<f64>> =
        nlp.blocks().iter().map(|b| DMatrix::identity(b.vars.len(), b.vars.len())).collect();
    let mut initialized = vec![false; hess.len()];
    let mut rho = opts.penalty_init;
    let mut nu = opts.penalty_init;
    let mut prox = 0.0f64;
    let mut stalled = 0usize;
    let mut merit_steps = Vec::new();
    let mut last = Measures { violation: f64::INFINITY, stationarity: f64::INFINITY, complementarity: 0.0 };
    let mut y_eq = vec![0.0; solver.layout.n_eq];
    let mut lam = vec![0.0; solver.layout.n_ineq];

    for it in 0..opts.max_iter {
        let viol1 = eval.values.l1_violation();
        // let the elastic penalty relax towards the multiplier size once steering is no longer needed
        let mult_prev = inf_norm(&y_eq).max(inf_norm(&lam));
        rho = rho.min((10.0 * mult_prev).max(opts.penalty_init));
        let mut qp = solver.solve_subproblem(&z, &eval, &hess, &eval.values.eq, &eval.values.ineq, rho, prox)?;
        let (mut lin_eq, mut lin_ineq) = solver.linearized(&eval, &qp.d);
        let lin_violation = |e: &[f64], i: &[f64]| {
            e.iter().map(|v| v.abs()).sum::<f64>() + i.iter().map(|v| v.max(0.0)).sum::<f64>()
        };
        let mut lin1 = lin_violation(&lin_eq, &lin_ineq);
        // steer the elastic penalty towards feasibility of the linearization
        let mut raises = 0;
        while lin1 > 1e-6 * (1.0 + viol1) && rho < opts.penalty_max && raises < 3 {
            rho = (rho * 10.0).min(opts.penalty_max);
            qp = solver.solve_subproblem(&z, &eval, &hess, &eval.values.eq, &eval.values.ineq, rho, prox)?;
            (lin_eq, lin_ineq) = solver.linearized(&eval, &qp.d);
            lin1 = lin_violation(&lin_eq, &lin_ineq);
            raises += 1;
        }
        y_eq.clone_from(&qp.y_eq);
        lam.clone_from(&qp.lam_ineq);

        last = solver.measures(&eval, &qp, prox);
        let d_norm = inf_norm(&qp.d);
        if opts.verbose {
            eprintln!(
                "sqp {it:4} f {:.6e} viol {:.2e} lin {lin1:.1e} stat {:.2e} comp {:.2e} |d| {:.2e} rho {:.1e} qp_it {}",
                eval.values.f, last.violation, last.stationarity, last.complementarity, d_norm, rho, qp.iterations
            );
        }
        if last.violation <= opts.feas_tol
            && last.stationarity <= opts.opt_tol
            && last.complementarity <= opts.opt_tol
        {
            return Ok(SqpResult {
                status: SqpStatus::Optimal,
                cost: eval.values.f,
                z,
                iterations: it,
                max_violation: last.violation,
                stationarity: last.stationarity,
                y_eq,
                lam_ineq: lam,
                merit_steps,
            });
        }

        let mult_max = inf_norm(&y_eq).max(inf_norm(&lam));
        if nu < 1.1 * mult_max + 1e-3 {
            nu = 2.0 * mult_max + 1e-3;
        } else if nu > 10.0 * mult_max + opts.penalty_init {
            nu *= 0.5;
        }
        let grad = assemble_gradient(nlp.blocks(), &eval.grad, n);
        let gd: f64 = grad.iter().zip(&qp.d).map(|(a, b)| a * b).sum();
        let phi0 = eval.values.f + nu * viol1;
        let dphi = gd - nu * (viol1 - lin1);

        let trial = |step: &[f64], alpha: f64| -> (Vec<f64>, Values) {
            let zt: Vec<f64> = (0..n).map(|i| (z[i] + alpha * step[i]).clamp(lo[i], hi[i])).collect();
            let v = eval_values(nlp, &solver.layout, &zt);
            (zt, v)
        };
        let merit = |v: &Values| {
            if v.is_finite() {
                v.f + nu * v.l1_violation()
            } else {
                f64::INFINITY
            }
        };
        let armijo = 1e-4;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        let mut alpha_taken = 1.0;
        let (zt, vt) = trial(&qp.d, 1.0);
        let phi_t = merit(&vt);
        if phi_t <= phi0 + armijo * dphi.min(0.0) {
            accepted = Some((zt, phi_t));
        } else if vt.is_finite() {
            // second-order correction for the curvature of the constraints
            let c_eq: Vec<f64> = vt.eq.iter().zip(&lin_eq).zip(&eval.values.eq).map(|((a, l), c)| a - (l - c)).collect();
            let c_in: Vec<f64> =
                vt.ineq.iter().zip(&lin_ineq).zip(&eval.values.ineq).map(|((a, l), c)| a - (l - c)).collect();
            if let Ok(soc) = solver.solve_subproblem(&z, &eval, &hess, &c_eq, &c_in, rho, prox) {
                let (zs, vs) = trial(&soc.d, 1.0);
                let phi_s = merit(&vs);
                if phi_s <= phi0 + armijo * dphi.min(0.0) {
                    accepted = Some((zs, phi_s));
                }
            }
        }
        if accepted.is_none() {
            let mut alpha = 0.5;
            while alpha > 1e-10 {
                let (zt, vt) = trial(&qp.d, alpha);
                let phi_t = merit(&vt);
                if phi_t <= phi0 + armijo * alpha * dphi.min(0.0) {
                    accepted = Some((zt, phi_t));
                    alpha_taken = alpha;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if opts.verbose {
            eprintln!("     alpha {alpha_taken:.1e} prox {prox:.1e} nu {nu:.1e} accepted {}", accepted.is_some());
        }
        // proximal damping keeps steps inside the region where the linearization is trustworthy
        if accepted.is_none() || alpha_taken < 0.1 {
            prox = (prox * 3.0).clamp(1e-3, 1e4);
        } else if alpha_taken == 1.0 {
            prox = if prox < 1e-3 { 0.0 } else { prox * 0.7 };
        }
        let acceptable = last.violation <= opts.feas_tol
            && last.stationarity <= opts.acceptable_tol
            && last.complementarity <= opts.acceptable_tol;
        let progress = accepted.as_ref().map_or(0.0, |(_, p)| phi0 - p);
        if acceptable && progress <= 1e-10 * (1.0 + phi0.abs()) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        if stalled >= opts.acceptable_iter {
            return Ok(SqpResult {
                status: SqpStatus::Acceptable,
                cost: eval.values.f,
                z,
                iterations: it,
                max_violation: last.violation,
                stationarity: last.stationarity,
                y_eq,
                lam_ineq: lam,
                merit_steps,
            });
        }
        let Some((z_new, phi_new)) = accepted else {
            // no progress along this direction: restart the curvature model
            for (h, init) in hess.iter_mut().zip(initialized.iter_mut()) {
                h.fill_with_identity();
                *init = false;
            }
            rho = (rho * 10.0).min(opts.penalty_max);
            continue;
        };

        let grad_old = solver.lagrangian_gradients(&eval, &y_eq, &lam);
        let eval_new = eval_derivatives(nlp, &solver.layout, &z_new);
        let grad_new = solver.lagrangian_gradients(&eval_new, &y_eq, &lam);
        for (b, blk) in nlp.blocks().iter().enumerate() {
            let s = DVector::from_fn(blk.vars.len(), |c, _| z_new[blk.vars[c]] - z[blk.vars[c]]);
            let yv = &grad_new[b] - &grad_old[b];
            bfgs_update(&mut hess[b], &s, &yv, &mut initialized[b]);
        }
        z = z_new;
        eval = eval_new;
        merit_steps.push((phi0, phi_new));
    }
    Err(SqpError::NotConverged {
        iterations: opts.max_iter,
        worst: solver.worst_constraint(&eval.values),
        violation: eval.values.max_violation(),
        stationarity: last.stationarity,
        z,
    })
}
