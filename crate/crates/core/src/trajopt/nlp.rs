//! Block-separable nonlinear programs.
//!
//! The objective and constraints are sums of element functions, each of which
//! reads a small subset of the decision variables. The solver exploits this for
//! finite-difference derivatives, partitioned quasi-Newton updates and the
//! banded structure of the KKT system.

use nalgebra::DMatrix;

/// One element function: the variables it reads and how many equality and
/// inequality (`<= 0`) rows it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub vars: Vec<usize>,
    pub n_eq: usize,
    pub n_ineq: usize,
    /// Elimination key used to order KKT unknowns; rows are placed among variables with similar keys.
    pub stage: f64,
}

pub trait Nlp {
    fn num_vars(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn blocks(&self) -> &[Block];

    /// Evaluates block `b` at its local variables, writing equality and
    /// inequality rows and returning the objective contribution.
    fn eval_block(&self, b: usize, local: &[f64], eq: &mut [f64], ineq: &mut [f64]) -> f64;

    /// Elimination key of a variable.
    fn var_stage(&self, i: usize) -> f64 {
        i as f64
    }

    /// Human-readable label of an equality (`eq = true`) or inequality row.
    fn row_label(&self, eq: bool, row: usize) -> String {
        format!("{} row {row}", if eq { "equality" } else { "inequality" })
    }
}

/// Offsets of each block's rows in the global equality and inequality vectors.
#[derive(Debug, Clone)]
pub struct RowLayout {
    pub eq_start: Vec<usize>,
    pub ineq_start: Vec<usize>,
    pub n_eq: usize,
    pub n_ineq: usize,
}

impl RowLayout {
    pub fn new(blocks: &[Block]) -> Self {
        let (mut eq, mut ineq) = (0, 0);
        let mut eq_start = Vec::with_capacity(blocks.len());
        let mut ineq_start = Vec::with_capacity(blocks.len());
        for b in blocks {
            eq_start.push(eq);
            ineq_start.push(ineq);
            eq += b.n_eq;
            ineq += b.n_ineq;
        }
        RowLayout { eq_start, ineq_start, n_eq: eq, n_ineq: ineq }
    }
}

/// Values of the objective and constraints.
#[derive(Debug, Clone)]
pub struct Values {
    pub f: f64,
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
}

impl Values {
    pub fn is_finite(&self) -> bool {
        self.f.is_finite() && self.eq.iter().chain(&self.ineq).all(|v| v.is_finite())
    }

    /// Sum of absolute equality residuals and positive inequality parts.
    pub fn l1_violation(&self) -> f64 {
        self.eq.iter().map(|v| v.abs()).sum::<f64>() + self.ineq.iter().map(|v| v.max(0.0)).sum::<f64>()
    }

    pub fn max_violation(&self) -> f64 {
        self.eq
            .iter()
            .map(|v| v.abs())
            .chain(self.ineq.iter().map(|v| v.max(0.0)))
            .fold(0.0, f64::max)
    }
}

/// Values plus per-block derivatives.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub values: Values,
    /// Objective gradient of each block over its local variables.
    pub grad: Vec<Vec<f64>>,
    /// Jacobian of each block's rows (equalities first) over its local variables.
    pub jac: Vec<DMatrix<f64>>,
}

fn gather(z: &[f64], vars: &[usize]) -> Vec<f64> {
    vars.iter().map(|&i| z[i]).collect()
}

pub fn eval_values<P: Nlp + ?Sized>(nlp: &P, layout: &RowLayout, z: &[f64]) -> Values {
    let mut eq = vec![0.0; layout.n_eq];
    let mut ineq = vec![0.0; layout.n_ineq];
    let mut f = 0.0;
    for (b, blk) in nlp.blocks().iter().enumerate() {
        let local = gather(z, &blk.vars);
        let e0 = layout.eq_start[b];
        let i0 = layout.ineq_start[b];
        f += nlp.eval_block(b, &local, &mut eq[e0..e0 + blk.n_eq], &mut ineq[i0..i0 + blk.n_ineq]);
    }
    Values { f, eq, ineq }
}

const FD_STEP: f64 = 1e-6;

/// Values and central-difference derivatives of every block.
pub fn eval_derivatives<P: Nlp + ?Sized>(nlp: &P, layout: &RowLayout, z: &[f64]) -> Evaluation {
    let values = eval_values(nlp, layout, z);
    let mut grad = Vec::with_capacity(nlp.blocks().len());
    let mut jac = Vec::with_capacity(nlp.blocks().len());
    for (b, blk) in nlp.blocks().iter().enumerate() {
        let n = blk.vars.len();
        let rows = blk.n_eq + blk.n_ineq;
        let mut local = gather(z, &blk.vars);
        let mut g = vec![0.0; n];
        let mut j = DMatrix::zeros(rows, n);
        let mut eq_p = vec![0.0; blk.n_eq];
        let mut in_p = vec![0.0; blk.n_ineq];
        let mut eq_m = vec![0.0; blk.n_eq];
        let mut in_m = vec![0.0; blk.n_ineq];
        for c in 0..n {
            let orig = local[c];
            let h = FD_STEP * orig.abs().max(1.0);
            local[c] = orig + h;
            let fp = nlp.eval_block(b, &local, &mut eq_p, &mut in_p);
            local[c] = orig - h;
            let fm = nlp.eval_block(b, &local, &mut eq_m, &mut in_m);
            local[c] = orig;
            let inv = 1.0 / (2.0 * h);
            g[c] = (fp - fm) * inv;
            for r in 0..blk.n_eq {
                j[(r, c)] = (eq_p[r] - eq_m[r]) * inv;
            }
            for r in 0..blk.n_ineq {
                j[(blk.n_eq + r, c)] = (in_p[r] - in_m[r]) * inv;
            }
        }
        grad.push(g);
        jac.push(j);
    }
    Evaluation { values, grad, jac }
}

/// Dense objective gradient assembled from the blocks.
pub fn assemble_gradient(blocks: &[Block], grad: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (blk, g) in blocks.iter().zip(grad) {
        for (&i, &v) in blk.vars.iter().zip(g) {
            out[i] += v;
        }
    }
    out
}

/// `J^T y` over all rows, where `y_eq` and `y_ineq` are global multiplier vectors.
pub fn jacobian_transpose_product(
    blocks: &[Block],
    layout: &RowLayout,
    jac: &[DMatrix<f64>],
    y_eq: &[f64],
    y_ineq: &[f64],
    n: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (b, blk) in blocks.iter().enumerate() {
        let j = &jac[b];
        for (c, &var) in blk.vars.iter().enumerate() {
            let mut s = 0.0;
            for r in 0..blk.n_eq {
                s += j[(r, c)] * y_eq[layout.eq_start[b] + r];
            }
            for r in 0..blk.n_ineq {
                s += j[(blk.n_eq + r, c)] * y_ineq[layout.ineq_start[b] + r];
            }
            out[var] += s;
        }
    }
    out
}
