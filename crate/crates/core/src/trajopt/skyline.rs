//! Symmetric envelope (skyline) storage with an unpivoted `L D L^T` factorization.
//!
//! Intended for quasi-definite KKT matrices ordered so that each row's first
//! nonzero is close to the diagonal; fill stays inside the envelope.

#[derive(Debug, Clone)]
pub struct Skyline {
    n: usize,
    /// First stored column of each row.
    first: Vec<usize>,
    /// Offset of row `i`'s first stored entry; row `i` occupies `start[i]..start[i + 1]`.
    start: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("zero pivot at position {0}")]
pub struct ZeroPivot(pub usize);

impl Skyline {
    /// Envelope with the given first column per row (`first[i] <= i`).
    pub fn new(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut start = Vec::with_capacity(n + 1);
        let mut off = 0;
        for (i, &f) in first.iter().enumerate() {
            debug_assert!(f <= i);
            start.push(off);
            off += i - f + 1;
        }
        start.push(off);
        Skyline { n, first, start, data: vec![0.0; off] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && j >= self.first[i], "({i}, {j}) outside envelope");
        self.start[i] + (j - self.first[i])
    }

    /// Adds `v` to entry `(i, j)` of the symmetric matrix.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.first[r] {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// In-place factorization; afterwards the strict lower part holds `L` and the diagonal holds `D`.
    ///
    /// Pivots smaller than `tiny` in magnitude are replaced by `tiny` with the
    /// sign expected from `expected_sign` (quasi-definite structure).
    pub fn factor(&mut self, expected_sign: &[f64], tiny: f64) -> Result<usize, ZeroPivot> {
        let mut bumped = 0;
        let mut w = vec![0.0; self.n];
        for i in 0..self.n {
            let fi = self.first[i];
            let si = self.start[i];
            // w[j] holds L_ij * D_j for the already processed columns of row i.
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.start[j];
                let lo = fi.max(fj);
                let mut s = self.data[si + (j - fi)];
                for k in lo..j {
                    s -= w[k] * self.data[sj + (k - fj)];
                }
                w[j] = s;
                let dj = self.data[sj + (j - fj)];
                self.data[si + (j - fi)] = s / dj;
            }
            let mut d = self.data[si + (i - fi)];
            for j in fi..i {
                d -= w[j] * self.data[si + (j - fi)];
            }
            if !d.is_finite() {
                return Err(ZeroPivot(i));
            }
            if d.abs() < tiny || d * expected_sign[i] < 0.0 {
                d = tiny.max(d.abs()) * expected_sign[i];
                bumped += 1;
            }
            self.data[si + (i - fi)] = d;
        }
        Ok(bumped)
    }

    /// Solves `L D L^T x = b` in place after [`Skyline::factor`].
    pub fn solve(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let fi = self.first[i];
            let si = self.start[i];
            let mut s = b[i];
            for j in fi..i {
                s -= self.data[si + (j - fi)] * b[j];
            }
            b[i] = s;
        }
        for i in 0..self.n {
            b[i] /= self.data[self.start[i] + (i - self.first[i])];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let xi = b[i];
            for j in fi..i {
                b[j] -= self.data[si + (j - fi)] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn solves_quasi_definite_system() {
        // [H A^T; A -D] with banded coupling
        let n = 12;
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let mut first = vec![0usize; n];
        for i in 0..n {
            let sign = if i % 3 == 2 { -1.0 } else { 1.0 };
            dense[(i, i)] = sign * (2.0 + i as f64 * 0.1);
            first[i] = i.saturating_sub(3);
            for j in first[i]..i {
                let v = ((i * 7 + j * 3) % 5) as f64 * 0.1 - 0.2;
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
        let mut sky = Skyline::new(first.clone());
        for i in 0..n {
            for j in first[i]..=i {
                sky.add(i, j, dense[(i, j)]);
            }
        }
        let signs: Vec<f64> = (0..n).map(|i| if i % 3 == 2 { -1.0 } else { 1.0 }).collect();
        assert_eq!(sky.factor(&signs, 1e-14).unwrap(), 0);
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let mut x = b.as_slice().to_vec();
        sky.solve(&mut x);
        let r = &dense * DVector::from_vec(x) - b;
        assert!(r.amax() < 1e-12);
    }
}
