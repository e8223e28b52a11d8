//! Backward Riccati integration for finite- and infinite-horizon LQR.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RiccatiError {
    #[error("cost-to-go diverged (norm {norm:.3e}) at tau = {tau:.4} s; the linearization is not stabilizable")]
    Diverged { tau: f64, norm: f64 },
    #[error("algebraic Riccati iteration did not settle (residual {residual:.3e})")]
    NoConvergence { residual: f64 },
    #[error("weights are invalid: {0}")]
    Weights(String),
    #[error("linearization failed at tau = {tau:.4} s")]
    Linearization { tau: f64 },
}

/// Dense samples of the cost-to-go and gain on an ascending time grid.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub taus: Vec<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
}

const DIVERGENCE_NORM: f64 = 1e9;

fn check_weights(q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>, RiccatiError> {
    if q.nrows() != q.ncols() || r.nrows() != r.ncols() {
        return Err(RiccatiError::Weights("Q and R must be square".into()));
    }
    let (qmin, _) = crate::linalg::eigen_range(q);
    if qmin < -1e-12 {
        return Err(RiccatiError::Weights(format!("Q is not positive semidefinite (min eigenvalue {qmin:.3e})")));
    }
    r.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| RiccatiError::Weights("R is not positive definite".into()))
}

/// `-S' = A^T S + S A - S B R^-1 B^T S + Q`, returned as `S'` in forward time.
fn riccati_rhs(s: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, r_inv: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let sb = s * b;
    let rhs = a.transpose() * s + s * a - &sb * r_inv * sb.transpose() + q;
    -rhs
}

fn gain(s: &DMatrix<f64>, b: &DMatrix<f64>, r_inv: &DMatrix<f64>) -> DMatrix<f64> {
    r_inv * b.transpose() * s
}

/// Integrates the Riccati equation backward from `tau = horizon` (where `S = s_final`)
/// to `tau = 0` with RK4 on a uniform grid no coarser than `grid_dt`.
///
/// `ab(tau)` returns the linearization `(A, B)` at phase time `tau`.
pub fn riccati_backward<F>(
    mut ab: F,
    horizon: f64,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    s_final: &DMatrix<f64>,
    grid_dt: f64,
) -> Result<RiccatiSolution, RiccatiError>
where
    F: FnMut(f64) -> Option<(DMatrix<f64>, DMatrix<f64>)>,
{
    let r_inv = check_weights(q, r)?;
    if !(grid_dt > 0.0) || !(horizon >= 0.0) {
        return Err(RiccatiError::Weights("grid step and horizon must be positive".into()));
    }
    let steps = ((horizon / grid_dt).ceil() as usize).max(1);
    let dt = horizon / steps as f64;
    let mut eval = |tau: f64| ab(tau).ok_or(RiccatiError::Linearization { tau });

    let mut taus = vec![0.0; steps + 1];
    let mut s_out = vec![DMatrix::zeros(0, 0); steps + 1];
    let mut k_out = vec![DMatrix::zeros(0, 0); steps + 1];
    let mut s = s_final.clone();
    let (a_hi, b_hi) = eval(horizon)?;
    taus[steps] = horizon;
    k_out[steps] = gain(&s, &b_hi, &r_inv);
    s_out[steps] = s.clone();
    let mut ab_hi = (a_hi, b_hi);
    for i in (0..steps).rev() {
        let t1 = (i + 1) as f64 * dt;
        let t0 = i as f64 * dt;
        let ab_mid = eval(0.5 * (t0 + t1))?;
        let ab_lo = eval(t0)?;
        // backward step: dS/d(-tau) = -rhs
        let f = |s: &DMatrix<f64>, m: &(DMatrix<f64>, DMatrix<f64>)| -riccati_rhs(s, &m.0, &m.1, &r_inv, q);
        let k1 = f(&s, &ab_hi);
        let k2 = f(&(&s + &k1 * (0.5 * dt)), &ab_mid);
        let k3 = f(&(&s + &k2 * (0.5 * dt)), &ab_mid);
        let k4 = f(&(&s + &k3 * dt), &ab_lo);
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        s = (&s + s.transpose()) * 0.5;
        let norm = s.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(RiccatiError::Diverged { tau: t0, norm });
        }
        taus[i] = t0;
        k_out[i] = gain(&s, &ab_lo.1, &r_inv);
        s_out[i] = s.clone();
        ab_hi = ab_lo;
    }
    Ok(RiccatiSolution { taus, s: s_out, k: k_out })
}

/// Infinite-horizon LQR by integrating the Riccati equation backward until it is
/// stationary. Returns `(K, S)`.
pub fn lqr_infinite(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), RiccatiError> {
    let r_inv = check_weights(q, r)?;
    let mut s = q.clone();
    let a_norm = a.norm();
    let brb = b * &r_inv * b.transpose();
    let mut tau = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..2_000_000 {
        let rhs = riccati_rhs(&s, a, b, &r_inv, q);
        residual = rhs.norm();
        if residual < 1e-9 * s.norm().max(1.0) {
            let k = gain(&s, b, &r_inv);
            return Ok((k, s));
        }
        // step limited by the fastest closed-loop and open-loop rates
        let rate = 2.0 * a_norm + (&brb * &s).norm() + 1e-3;
        let dt = (0.5 / rate).min(1.0);
        let f = |s: &DMatrix<f64>| -riccati_rhs(s, a, b, &r_inv, q);
        let k1 = f(&s);
        let k2 = f(&(&s + &k1 * (0.5 * dt)));
        let k3 = f(&(&s + &k2 * (0.5 * dt)));
        let k4 = f(&(&s + &k3 * dt));
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        s = (&s + s.transpose()) * 0.5;
        tau += dt;
        let norm = s.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(RiccatiError::Diverged { tau: -tau, norm });
        }
    }
    Err(RiccatiError::NoConvergence { residual })
}
