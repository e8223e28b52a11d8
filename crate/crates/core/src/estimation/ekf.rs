//! Extended Kalman filter over position, world velocity and accelerometer bias.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use crate::linalg::{rot, Vec2};

pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;

/// Filter mean `(r_x, r_z, v_x, v_z, b_ax, b_az)` with world-frame position and
/// velocity and body-frame accelerometer biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    pub mean: Vec6,
    pub cov: Mat6,
    /// Most recent orientation input, used by the measurement models.
    pub theta: f64,
}

impl EstimatorState {
    pub fn new(position: Vec2, velocity: Vec2, theta: f64, cov: Mat6) -> Self {
        let mean = Vec6::from([position.x, position.y, velocity.x, velocity.y, 0.0, 0.0]);
        EstimatorState { mean, cov, theta }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.mean[2], self.mean[3])
    }

    pub fn bias(&self) -> Vec2 {
        Vec2::new(self.mean[4], self.mean[5])
    }

    /// Body-frame velocity implied by the current orientation input.
    pub fn body_velocity(&self) -> Vec2 {
        rot(self.theta).transpose() * self.velocity()
    }

    pub fn sigmas(&self) -> Vec6 {
        self.cov.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Process noise as spectral densities, scaled by the prediction step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    /// Position, m^2/s.
    pub position: f64,
    /// Velocity, (m/s)^2/s.
    pub velocity: f64,
    /// Bias random walk, m^2/s^5.
    pub bias: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        ProcessNoise { position: 1e-8, velocity: 1e-4, bias: 1e-6 }
    }
}

/// Propagates the filter with one IMU sample of specific force `accel_body`,
/// treating the net world acceleration as constant over `dt`.
pub fn ekf_predict(
    est: &EstimatorState,
    accel_body: &Vec2,
    theta_meas: f64,
    gravity: f64,
    dt: f64,
    noise: &ProcessNoise,
) -> EstimatorState {
    let r = rot(theta_meas);
    let a = r * (accel_body - est.bias()) - Vec2::new(0.0, gravity);
    let m = &est.mean;
    let mut mean = *m;
    mean[0] += m[2] * dt + 0.5 * a.x * dt * dt;
    mean[1] += m[3] * dt + 0.5 * a.y * dt * dt;
    mean[2] += a.x * dt;
    mean[3] += a.y * dt;

    let mut f = Mat6::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    for i in 0..2 {
        for j in 0..2 {
            f[(i, 4 + j)] = -0.5 * dt * dt * r[(i, j)];
            f[(2 + i, 4 + j)] = -dt * r[(i, j)];
        }
    }
    let q = Mat6::from_diagonal(&Vec6::from([
        noise.position,
        noise.position,
        noise.velocity,
        noise.velocity,
        noise.bias,
        noise.bias,
    ])) * dt;
    let cov = f * est.cov * f.transpose() + q;
    EstimatorState { mean, cov: crate::linalg::symmetrize(&cov), theta: theta_meas }
}

/// A linearized measurement: observed values, predictions, Jacobian rows and noise variances.
/// Channels whose observed value is NaN are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub y: DVector<f64>,
    pub h: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub variance: DVector<f64>,
}

/// Diagnostics of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    /// False when no channel was available or the innovation covariance was singular.
    pub applied: bool,
}

/// Joseph-form EKF update over the available channels of `meas`.
pub fn ekf_update(est: &EstimatorState, meas: &Measurement) -> (EstimatorState, UpdateReport) {
    let rows: Vec<usize> = (0..meas.y.len()).filter(|&i| meas.y[i].is_finite()).collect();
    let n = rows.len();
    let skipped = |innovation, innovation_cov| {
        (*est, UpdateReport { innovation, innovation_cov, applied: false })
    };
    if n == 0 {
        return skipped(DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let nu = DVector::from_iterator(n, rows.iter().map(|&i| meas.y[i] - meas.h[i]));
    let h = DMatrix::from_fn(n, 6, |r, c| meas.jac[(rows[r], c)]);
    let rm = DMatrix::from_diagonal(&DVector::from_iterator(n, rows.iter().map(|&i| meas.variance[i])));
    let p = DMatrix::from_column_slice(6, 6, est.cov.as_slice());
    let s = &h * &p * h.transpose() + &rm;
    let Some(s_inv) = s.clone().try_inverse().filter(|m| m.iter().all(|v| v.is_finite())) else {
        return skipped(nu, s);
    };
    let k = &p * h.transpose() * s_inv;
    let dx = &k * &nu;
    let i_kh = DMatrix::identity(6, 6) - &k * &h;
    let p_new = &i_kh * &p * i_kh.transpose() + &k * &rm * k.transpose();
    let mut out = *est;
    for i in 0..6 {
        out.mean[i] += dx[i];
    }
    out.cov = crate::linalg::symmetrize(&Mat6::from_column_slice(p_new.as_slice()));
    (out, UpdateReport { innovation: nu, innovation_cov: s, applied: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state() -> EstimatorState {
        EstimatorState::new(Vec2::new(0.3, -1.0), Vec2::new(1.0, 0.2), 0.1, Mat6::identity() * 0.01)
    }

    #[test]
    fn gravity_compensated_rest_is_stationary() {
        let est = EstimatorState::new(Vec2::new(1.0, -2.0), Vec2::zeros(), 0.0, Mat6::identity());
        let mut s = est;
        for _ in 0..1000 {
            s = ekf_predict(&s, &Vec2::new(0.0, 9.81), 0.0, 9.81, 1e-3, &ProcessNoise::default());
        }
        assert!((s.mean - est.mean).norm() < 1e-12);
    }

    #[test]
    fn constant_acceleration_integrates() {
        let mut s = EstimatorState::new(Vec2::zeros(), Vec2::zeros(), 0.0, Mat6::identity());
        for _ in 0..1000 {
            s = ekf_predict(&s, &Vec2::new(1.0, 9.81), 0.0, 9.81, 1e-3, &ProcessNoise::default());
        }
        assert!((s.mean[2] - 1.0).abs() <= 1e-3);
        assert!((s.mean[0] - 0.5).abs() <= 1e-3);
    }

    #[test]
    fn covariance_grows_without_updates() {
        let mut s = state();
        for _ in 0..10 {
            let next = ekf_predict(&s, &Vec2::zeros(), 0.3, 9.81, 1e-2, &ProcessNoise::default());
            assert!(next.cov.trace() > s.cov.trace());
            s = next;
        }
    }

    fn position_measurement(y: [f64; 2], var: f64) -> impl Fn(&EstimatorState) -> Measurement {
        move |est: &EstimatorState| Measurement {
            y: DVector::from_row_slice(&y),
            h: DVector::from_row_slice(&[est.mean[0], est.mean[1]]),
            jac: DMatrix::from_row_slice(2, 6, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            variance: DVector::from_element(2, var),
        }
    }

    #[test]
    fn precise_measurement_is_reproduced() {
        let est = state();
        let (post, rep) = ekf_update(&est, &position_measurement([0.7, -0.4], 1e-12)(&est));
        assert!(rep.applied);
        assert_relative_eq!(post.mean[0], 0.7, epsilon = 1e-6);
        assert_relative_eq!(post.mean[1], -0.4, epsilon = 1e-6);
    }

    #[test]
    fn useless_measurement_keeps_prior() {
        let est = state();
        let (post, _) = ekf_update(&est, &position_measurement([0.7, -0.4], 1e12)(&est));
        assert!((post.mean - est.mean).norm() <= 1e-9);
        assert!((post.cov - est.cov).norm() <= 1e-9);
    }

    #[test]
    fn nan_channels_are_skipped() {
        let est = state();
        let (post, rep) = ekf_update(&est, &position_measurement([f64::NAN, -0.4], 1e-4)(&est));
        assert_eq!(rep.innovation.len(), 1);
        assert_eq!(post.mean[0], est.mean[0]);
        let (same, rep) = ekf_update(&est, &position_measurement([f64::NAN, f64::NAN], 1e-4)(&est));
        assert!(!rep.applied);
        assert_eq!(same, est);
    }
}
