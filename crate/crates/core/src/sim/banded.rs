//! Symmetric positive-definite banded solve (Cholesky) and a general
//! tridiagonal solve, both O(n).

/// Lower band of a symmetric matrix: `a[i][k]` holds entry (i, i - k).
#[derive(Debug, Clone)]
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn new(n: usize, bw: usize) -> Self {
        BandedSpd {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn reset(&mut self, n: usize) {
        self.n = n;
        self.data.clear();
        self.data.resize(n * (self.bw + 1), 0.0);
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Adds `v` to entry (i, j). Only the lower triangle is stored, so
    /// callers add each symmetric pair once with `i >= j`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.at(i, j);
        self.data[k] += v;
    }

    /// In-place Cholesky factorization. Returns false if not positive definite.
    pub fn factor(&mut self) -> bool {
        let bw = self.bw;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = self.data[self.at(i, j)];
                let p0 = j0.max(j.saturating_sub(bw));
                for p in p0..j {
                    s -= self.data[self.at(i, p)] * self.data[self.at(j, p)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return false;
                    }
                    let k = self.at(i, i);
                    self.data[k] = s.sqrt();
                } else {
                    let k = self.at(i, j);
                    self.data[k] = s / self.data[self.at(j, j)];
                }
            }
        }
        true
    }

    /// Solves `L Lᵀ x = b` in place after [`BandedSpd::factor`].
    pub fn solve(&self, b: &mut [f64]) {
        let bw = self.bw;
        for i in 0..self.n {
            let mut s = b[i];
            for p in i.saturating_sub(bw)..i {
                s -= self.data[self.at(i, p)] * b[p];
            }
            b[i] = s / self.data[self.at(i, i)];
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for r in (i + 1)..(i + bw + 1).min(self.n) {
                s -= self.data[self.at(r, i)] * b[r];
            }
            b[i] = s / self.data[self.at(i, i)];
        }
    }
}

/// Solves a general tridiagonal system (Thomas algorithm) in place.
/// `lower[0]` and `upper[n-1]` are ignored. Returns false on a zero pivot.
pub(crate) fn solve_tridiagonal(
    lower: &[f64],
    diag: &mut [f64],
    upper: &[f64],
    rhs: &mut [f64],
) -> bool {
    let n = diag.len();
    for i in 1..n {
        if diag[i - 1] == 0.0 {
            return false;
        }
        let m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    if n == 0 {
        return true;
    }
    if diag[n - 1] == 0.0 {
        return false;
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
    true
}
