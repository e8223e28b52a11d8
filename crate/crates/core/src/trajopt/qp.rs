//! Elastic quadratic subproblem solved by a primal-dual interior-point method.
//!
//! ```text
//! min  1/2 d^T H d + g^T d + rho * (sum(p + q) + sum(t))
//! s.t. c_E + J_E d = p - q,   c_I + J_I d <= t,   lo <= d <= hi,   p, q, t >= 0
//! ```
//!
//! The elastic variables keep every subproblem feasible; when the
//! linearization is consistent and `rho` exceeds the multipliers they vanish.
//! Each Newton system is reduced to a quasi-definite KKT matrix and factored
//! in envelope form.

use nalgebra::DMatrix;

use super::nlp::{Block, RowLayout};
use super::skyline::Skyline;

/// Ordering and envelope of the reduced KKT matrix, shared by all subproblems
/// of one NLP.
#[derive(Debug, Clone)]
pub struct KktStructure {
    pub n: usize,
    /// Global indices of the free variables.
    pub free: Vec<usize>,
    /// Global variable index to free index.
    pub var_free: Vec<Option<usize>>,
    pos_var: Vec<usize>,
    pos_row: Vec<usize>,
    first: Vec<usize>,
    signs: Vec<f64>,
    n_eq: usize,
    n_ineq: usize,
}

impl KktStructure {
    /// `fixed[i]` marks variables whose bounds coincide; they are removed.
    pub fn new(blocks: &[Block], layout: &RowLayout, var_stage: &[f64], fixed: &[bool]) -> Self {
        let n = var_stage.len();
        let mut free = Vec::new();
        let mut var_free = vec![None; n];
        for i in 0..n {
            if !fixed[i] {
                var_free[i] = Some(free.len());
                free.push(i);
            }
        }
        let m = layout.n_eq + layout.n_ineq;
        // (stage, kind, index): variables precede rows at equal stage
        let mut items: Vec<(f64, u8, usize)> = free.iter().enumerate().map(|(f, &i)| (var_stage[i], 0, f)).collect();
        for (b, blk) in blocks.iter().enumerate() {
            for r in 0..blk.n_eq {
                items.push((blk.stage, 1, layout.eq_start[b] + r));
            }
            for r in 0..blk.n_ineq {
                items.push((blk.stage, 1, layout.n_eq + layout.ineq_start[b] + r));
            }
        }
        items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let total = items.len();
        let mut pos_var = vec![0; free.len()];
        let mut pos_row = vec![0; m];
        let mut signs = vec![0.0; total];
        for (p, &(_, kind, idx)) in items.iter().enumerate() {
            if kind == 0 {
                pos_var[idx] = p;
                signs[p] = 1.0;
            } else {
                pos_row[idx] = p;
                signs[p] = -1.0;
            }
        }
        let mut first: Vec<usize> = (0..total).collect();
        let mut positions = Vec::new();
        for (b, blk) in blocks.iter().enumerate() {
            positions.clear();
            positions.extend(blk.vars.iter().filter_map(|&i| var_free[i]).map(|f| pos_var[f]));
            positions.extend((0..blk.n_eq).map(|r| pos_row[layout.eq_start[b] + r]));
            positions.extend((0..blk.n_ineq).map(|r| pos_row[layout.n_eq + layout.ineq_start[b] + r]));
            if let Some(&lo) = positions.iter().min() {
                for &p in &positions {
                    first[p] = first[p].min(lo);
                }
            }
        }
        KktStructure {
            n,
            free,
            var_free,
            pos_var,
            pos_row,
            first,
            signs,
            n_eq: layout.n_eq,
            n_ineq: layout.n_ineq,
        }
    }

    pub fn envelope_size(&self) -> usize {
        self.first.iter().enumerate().map(|(i, &f)| i - f + 1).sum()
    }
}

/// Data of one subproblem in global indexing.
pub struct QpInput<'a> {
    pub blocks: &'a [Block],
    pub layout: &'a RowLayout,
    /// Per-block Hessian approximations over the block's local variables.
    pub hess: &'a [DMatrix<f64>],
    /// Multiple of the identity added to the assembled Hessian.
    pub reg: f64,
    pub grad: &'a [f64],
    pub jac: &'a [DMatrix<f64>],
    pub c_eq: &'a [f64],
    pub c_ineq: &'a [f64],
    pub lo: &'a [f64],
    pub hi: &'a [f64],
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub d: Vec<f64>,
    /// Equality multipliers (`L = f - y^T c_E + lam^T c_I`).
    pub y_eq: Vec<f64>,
    /// Inequality multipliers, non-negative.
    pub lam_ineq: Vec<f64>,
    pub z_lo: Vec<f64>,
    pub z_hi: Vec<f64>,
    /// Sum of elastic variables at the solution.
    pub elastic: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { tol: 1e-8, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("KKT factorization failed at position {0}")]
    Factorization(usize),
    #[error("non-finite iterate in the quadratic subproblem")]
    NonFinite,
}

struct Problem<'a, 'b> {
    s: &'a KktStructure,
    inp: &'a QpInput<'b>,
}

impl Problem<'_, '_> {
    fn row_count(&self) -> usize {
        self.s.n_eq + self.s.n_ineq
    }

    /// `(coefficient, cost)` of the two elastic variables of row `r`.
    fn elastic(&self, r: usize) -> [(f64, f64); 2] {
        let rho = self.inp.rho;
        if r < self.s.n_eq {
            [(-1.0, rho), (1.0, rho)]
        } else {
            [(1.0, 0.0), (-1.0, rho)]
        }
    }

    fn c_row(&self, r: usize) -> f64 {
        if r < self.s.n_eq {
            self.inp.c_eq[r]
        } else {
            self.inp.c_ineq[r - self.s.n_eq]
        }
    }

    fn block_rows(&self, b: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let blk = &self.inp.blocks[b];
        let e0 = self.inp.layout.eq_start[b];
        let i0 = self.s.n_eq + self.inp.layout.ineq_start[b];
        (0..blk.n_eq).map(move |r| (r, e0 + r)).chain((0..blk.n_ineq).map(move |r| (blk.n_eq + r, i0 + r)))
    }

    fn local(&self, b: usize, d: &[f64]) -> Vec<f64> {
        self.inp.blocks[b].vars.iter().map(|&i| self.s.var_free[i].map_or(0.0, |f| d[f])).collect()
    }

    /// `H d` over free variables.
    fn hess_mul(&self, d: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = d.iter().map(|v| v * self.inp.reg).collect();
        for (b, blk) in self.inp.blocks.iter().enumerate() {
            let h = &self.inp.hess[b];
            let loc = self.local(b, d);
            for (a, &i) in blk.vars.iter().enumerate() {
                if let Some(f) = self.s.var_free[i] {
                    let mut s = 0.0;
                    for (c, v) in loc.iter().enumerate() {
                        s += h[(a, c)] * v;
                    }
                    out[f] += s;
                }
            }
        }
        out
    }

    /// `J d` for all rows.
    fn jac_mul(&self, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.row_count()];
        for b in 0..self.inp.blocks.len() {
            let j = &self.inp.jac[b];
            let loc = self.local(b, d);
            for (lr, gr) in self.block_rows(b) {
                let mut s = 0.0;
                for (c, v) in loc.iter().enumerate() {
                    s += j[(lr, c)] * v;
                }
                out[gr] = s;
            }
        }
        out
    }

    /// `J^T y` over free variables.
    fn jac_t_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.s.free.len()];
        for (b, blk) in self.inp.blocks.iter().enumerate() {
            let j = &self.inp.jac[b];
            for (c, &i) in blk.vars.iter().enumerate() {
                if let Some(f) = self.s.var_free[i] {
                    let mut s = 0.0;
                    for (lr, gr) in self.block_rows(b) {
                        s += j[(lr, c)] * y[gr];
                    }
                    out[f] += s;
                }
            }
        }
        out
    }

    fn assemble(&self, sky: &mut Skyline, sigma: &[f64], dr: &[f64]) {
        sky.clear();
        let s = self.s;
        for (f, &sg) in sigma.iter().enumerate() {
            let p = s.pos_var[f];
            sky.add(p, p, self.inp.reg + sg);
        }
        for (r, &v) in dr.iter().enumerate() {
            let p = s.pos_row[r];
            sky.add(p, p, -v);
        }
        for (b, blk) in self.inp.blocks.iter().enumerate() {
            let h = &self.inp.hess[b];
            let j = &self.inp.jac[b];
            let pos: Vec<Option<usize>> = blk.vars.iter().map(|&i| s.var_free[i].map(|f| s.pos_var[f])).collect();
            for (a, pa) in pos.iter().enumerate() {
                let Some(pa) = *pa else { continue };
                for (c, pc) in pos.iter().enumerate().take(a + 1) {
                    let Some(pc) = *pc else { continue };
                    let v = if a == c { h[(a, a)] } else { 0.5 * (h[(a, c)] + h[(c, a)]) };
                    if v != 0.0 {
                        sky.add(pa, pc, v);
                    }
                }
            }
            for (lr, gr) in self.block_rows(b) {
                let pr = s.pos_row[gr];
                for (c, pc) in pos.iter().enumerate() {
                    let Some(pc) = *pc else { continue };
                    let v = j[(lr, c)];
                    if v != 0.0 {
                        sky.add(pr, pc, v);
                    }
                }
            }
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest step in `(0, 1]` keeping `x + a dx > 0` for every pair.
fn max_step(x: &[f64], dx: &[f64], alpha: f64) -> f64 {
    let mut a = alpha;
    for (xi, di) in x.iter().zip(dx) {
        if *di < 0.0 {
            a = a.min(-xi / di);
        }
    }
    a
}

pub fn solve_qp(s: &KktStructure, inp: &QpInput, opts: &QpOptions) -> Result<QpSolution, QpError> {
    let pb = Problem { s, inp };
    let nf = s.free.len();
    let m = pb.row_count();
    let rho = inp.rho;

    let lo: Vec<f64> = s.free.iter().map(|&i| inp.lo[i]).collect();
    let hi: Vec<f64> = s.free.iter().map(|&i| inp.hi[i]).collect();
    let has_lo: Vec<bool> = lo.iter().map(|v| v.is_finite()).collect();
    let has_hi: Vec<bool> = hi.iter().map(|v| v.is_finite()).collect();
    let g: Vec<f64> = s.free.iter().map(|&i| inp.grad[i]).collect();

    let mut d: Vec<f64> = vec![0.0; nf];
    for f in 0..nf {
        d[f] = match (has_lo[f], has_hi[f]) {
            (true, true) => {
                let w = hi[f] - lo[f];
                let k = (0.25 * w).min(0.01 * (1.0 + w));
                d[f].clamp(lo[f] + k, hi[f] - k)
            }
            (true, false) => d[f].max(lo[f] + 0.01 * (1.0 + lo[f].abs())),
            (false, true) => d[f].min(hi[f] - 0.01 * (1.0 + hi[f].abs())),
            (false, false) => d[f],
        };
    }
    let mut zl: Vec<f64> = has_lo.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = has_hi.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let jd = pb.jac_mul(&d);
    let mut v = vec![0.0; 2 * m];
    let mut zeta = vec![0.0; 2 * m];
    let mut y = vec![0.0; m];
    for r in 0..m {
        let res = jd[r] + pb.c_row(r);
        let el = pb.elastic(r);
        // choose positive elastic values that satisfy the row exactly
        let (a, b) = if el[0].0 < 0.0 { (res.max(0.0) + 1.0, (-res).max(0.0) + 1.0) } else { ((-res).max(0.0) + 1.0, res.max(0.0) + 1.0) };
        v[2 * r] = a;
        v[2 * r + 1] = b;
        y[r] = if r < s.n_eq { 0.0 } else { -0.5 * rho };
        for k in 0..2 {
            zeta[2 * r + k] = (el[k].1 - el[k].0 * y[r]).max(1e-2 * rho.max(1.0));
        }
    }
    let n_comp = has_lo.iter().filter(|b| **b).count() + has_hi.iter().filter(|b| **b).count() + 2 * m;
    let g_scale = 1.0 + inf_norm(&g);
    let c_scale = 1.0 + inf_norm(inp.c_eq).max(inf_norm(inp.c_ineq));

    let mut sky = Skyline::new(s.first.clone());
    let mut converged = false;
    let mut iterations = 0;
    // bound slacks are carried separately so they stay strictly positive under rounding
    let mut sl: Vec<f64> = (0..nf).map(|f| if has_lo[f] { d[f] - lo[f] } else { 1.0 }).collect();
    let mut su: Vec<f64> = (0..nf).map(|f| if has_hi[f] { hi[f] - d[f] } else { 1.0 }).collect();
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let hd = pb.hess_mul(&d);
        let jty = pb.jac_t_mul(&y);
        let rd: Vec<f64> = (0..nf).map(|f| hd[f] + g[f] - jty[f] - zl[f] + zu[f]).collect();
        let jd = pb.jac_mul(&d);
        let mut rp = vec![0.0; m];
        let mut rv = vec![0.0; 2 * m];
        for r in 0..m {
            let el = pb.elastic(r);
            rp[r] = jd[r] + pb.c_row(r) + el[0].0 * v[2 * r] + el[1].0 * v[2 * r + 1];
            for k in 0..2 {
                rv[2 * r + k] = el[k].1 - el[k].0 * y[r] - zeta[2 * r + k];
            }
        }
        let comp: f64 = (0..nf)
            .map(|f| if has_lo[f] { sl[f] * zl[f] } else { 0.0 } + if has_hi[f] { su[f] * zu[f] } else { 0.0 })
            .sum::<f64>()
            + v.iter().zip(&zeta).map(|(a, b)| a * b).sum::<f64>();
        let mu = if n_comp > 0 { comp / n_comp as f64 } else { 0.0 };
        let res_d = inf_norm(&rd) / g_scale;
        let res_p = inf_norm(&rp) / c_scale;
        let res_v = inf_norm(&rv) / (1.0 + rho);
        if !(res_d.is_finite() && res_p.is_finite() && mu.is_finite()) {
            return Err(QpError::NonFinite);
        }
        // once complementarity is resolved the dual residual is limited by the conditioning of the KKT system
        let dual_ok = res_d <= opts.tol || (mu <= opts.tol * 1e-3 && res_d <= opts.tol * 1e2);
        if dual_ok && res_p <= opts.tol && res_v <= opts.tol && mu <= opts.tol {
            converged = true;
            break;
        }

        let sigma_d: Vec<f64> = (0..nf)
            .map(|f| if has_lo[f] { zl[f] / sl[f] } else { 0.0 } + if has_hi[f] { zu[f] / su[f] } else { 0.0 })
            .collect();
        let dr: Vec<f64> = (0..m).map(|r| v[2 * r] / zeta[2 * r] + v[2 * r + 1] / zeta[2 * r + 1]).collect();
        pb.assemble(&mut sky, &sigma_d, &dr);
        sky.factor(&s.signs, 1e-13).map_err(|e| QpError::Factorization(e.0))?;

        let direction = |cl: &[f64], cu: &[f64], cv: &[f64]| {
            let mut rhs = vec![0.0; sky.dim()];
            for f in 0..nf {
                let mut val = -rd[f];
                if has_lo[f] {
                    val -= cl[f] / sl[f];
                }
                if has_hi[f] {
                    val += cu[f] / su[f];
                }
                rhs[s.pos_var[f]] = val;
            }
            for r in 0..m {
                let el = pb.elastic(r);
                let mut val = -rp[r];
                for k in 0..2 {
                    let q = 2 * r + k;
                    val += el[k].0 * (v[q] / zeta[q]) * (rv[q] + cv[q] / v[q]);
                }
                rhs[s.pos_row[r]] = val;
            }
            sky.solve(&mut rhs);
            let dd: Vec<f64> = (0..nf).map(|f| rhs[s.pos_var[f]]).collect();
            let dy: Vec<f64> = (0..m).map(|r| -rhs[s.pos_row[r]]).collect();
            let dzl: Vec<f64> =
                (0..nf).map(|f| if has_lo[f] { (-cl[f] - zl[f] * dd[f]) / sl[f] } else { 0.0 }).collect();
            let dzu: Vec<f64> =
                (0..nf).map(|f| if has_hi[f] { (-cu[f] + zu[f] * dd[f]) / su[f] } else { 0.0 }).collect();
            let mut dv = vec![0.0; 2 * m];
            let mut dz = vec![0.0; 2 * m];
            for r in 0..m {
                let el = pb.elastic(r);
                for k in 0..2 {
                    let q = 2 * r + k;
                    dv[q] = (v[q] / zeta[q]) * (-rv[q] + el[k].0 * dy[r] - cv[q] / v[q]);
                    dz[q] = (-cv[q] - zeta[q] * dv[q]) / v[q];
                }
            }
            (dd, dy, dzl, dzu, dv, dz)
        };

        let step_len = |dd: &[f64], dzl: &[f64], dzu: &[f64], dv: &[f64], dz: &[f64]| {
            let mut a = 1.0f64;
            for f in 0..nf {
                if has_lo[f] {
                    if dd[f] < 0.0 {
                        a = a.min(-sl[f] / dd[f]);
                    }
                    if dzl[f] < 0.0 {
                        a = a.min(-zl[f] / dzl[f]);
                    }
                }
                if has_hi[f] {
                    if dd[f] > 0.0 {
                        a = a.min(su[f] / dd[f]);
                    }
                    if dzu[f] < 0.0 {
                        a = a.min(-zu[f] / dzu[f]);
                    }
                }
            }
            a = max_step(&v, dv, a);
            max_step(&zeta, dz, a)
        };

        let cl0: Vec<f64> = (0..nf).map(|f| sl[f] * zl[f]).collect();
        let cu0: Vec<f64> = (0..nf).map(|f| su[f] * zu[f]).collect();
        let cv0: Vec<f64> = v.iter().zip(&zeta).map(|(a, b)| a * b).collect();
        let (add, _ady, adzl, adzu, adv, adz) = direction(&cl0, &cu0, &cv0);
        let a_aff = step_len(&add, &adzl, &adzu, &adv, &adz);
        let mut comp_aff = 0.0;
        for f in 0..nf {
            if has_lo[f] {
                comp_aff += (sl[f] + a_aff * add[f]) * (zl[f] + a_aff * adzl[f]);
            }
            if has_hi[f] {
                comp_aff += (su[f] - a_aff * add[f]) * (zu[f] + a_aff * adzu[f]);
            }
        }
        for q in 0..2 * m {
            comp_aff += (v[q] + a_aff * adv[q]) * (zeta[q] + a_aff * adz[q]);
        }
        let mu_aff = if n_comp > 0 { comp_aff / n_comp as f64 } else { 0.0 };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };
        let target = sigma * mu;
        let cl: Vec<f64> = (0..nf).map(|f| cl0[f] + add[f] * adzl[f] - target).collect();
        let cu: Vec<f64> = (0..nf).map(|f| cu0[f] - add[f] * adzu[f] - target).collect();
        let cv: Vec<f64> = (0..2 * m).map(|q| cv0[q] + adv[q] * adz[q] - target).collect();
        let (dd, dy, dzl, dzu, dv, dz) = direction(&cl, &cu, &cv);
        let a = (0.995 * step_len(&dd, &dzl, &dzu, &dv, &dz)).min(1.0);
        for f in 0..nf {
            d[f] += a * dd[f];
            if has_lo[f] {
                sl[f] += a * dd[f];
                zl[f] += a * dzl[f];
            }
            if has_hi[f] {
                su[f] -= a * dd[f];
                zu[f] += a * dzu[f];
            }
        }
        for r in 0..m {
            y[r] += a * dy[r];
        }
        for q in 0..2 * m {
            v[q] += a * dv[q];
            zeta[q] += a * dz[q];
        }
    }

    let mut out_d = vec![0.0; s.n];
    let mut z_lo = vec![0.0; s.n];
    let mut z_hi = vec![0.0; s.n];
    for (f, &i) in s.free.iter().enumerate() {
        out_d[i] = d[f];
        z_lo[i] = zl[f];
        z_hi[i] = zu[f];
    }
    let elastic = (0..m)
        .map(|r| if r < s.n_eq { v[2 * r] + v[2 * r + 1] } else { v[2 * r + 1] })
        .sum();
    Ok(QpSolution {
        d: out_d,
        y_eq: y[..s.n_eq].to_vec(),
        lam_ineq: y[s.n_eq..].iter().map(|v| -v).collect(),
        z_lo,
        z_hi,
        elastic,
        iterations,
        converged,
    })
}
