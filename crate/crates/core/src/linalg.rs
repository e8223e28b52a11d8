//! Fixed-size aliases and small helpers shared across modules.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};

pub type Vec2 = Vector2<f64>;
pub type Vec7 = SVector<f64, 7>;
pub type Mat7 = SMatrix<f64, 7, 7>;
pub type Mat7x2 = SMatrix<f64, 7, 2>;
pub type Mat2x7 = SMatrix<f64, 2, 7>;

/// Planar rotation by `a` (body to world for pitch angles).
pub fn rot(a: f64) -> Matrix2<f64> {
    let (s, c) = a.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// Symmetric part of a square matrix.
pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    eigen_range(&nalgebra::DMatrix::from_column_slice(N, N, m.as_slice())).0
}

/// Smallest and largest eigenvalue of a symmetric dynamically sized matrix.
pub fn eigen_range(m: &nalgebra::DMatrix<f64>) -> (f64, f64) {
    let s = (m + m.transpose()) * 0.5;
    let ev = s.symmetric_eigenvalues();
    (ev.min(), ev.max())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_keeps_principal_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap_angle(7.0) - (7.0 - std::f64::consts::TAU)).abs() < 1e-12);
    }

    #[test]
    fn rotation_quarter_turn() {
        let r = rot(std::f64::consts::FRAC_PI_2);
        let v = r * Vec2::new(1.0, 0.0);
        assert!((v - Vec2::new(0.0, 1.0)).norm() < 1e-15);
    }
}
