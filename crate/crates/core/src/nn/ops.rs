//! Dense kernels shared by the forward and backward passes. Activations
//! are channel-major: `[channels][batch · length]`, each sample's frames
//! contiguous.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `c = op(a) · op(b) + beta · c`, all row-major; `op` transposes when the
/// flag is set. `op(a)` is `m × k`, `op(b)` is `k × n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every index stays in bounds for
    // the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

/// Unfolds `[ci][batch · len]` into `[ci · kernel][batch · len]` with
/// "same" zero padding (`(kernel − 1) / 2` frames on the left).
pub(crate) fn im2col(input: &[f64], ci: usize, batch: usize, len: usize, kernel: usize, out: &mut Vec<f64>) {
    let cols = batch * len;
    let pad = (kernel - 1) / 2;
    out.clear();
    out.resize(ci * kernel * cols, 0.0);
    for c in 0..ci {
        for k in 0..kernel {
            let row = &mut out[(c * kernel + k) * cols..(c * kernel + k + 1) * cols];
            for b in 0..batch {
                let src = &input[c * cols + b * len..c * cols + (b + 1) * len];
                let dst = &mut row[b * len..(b + 1) * len];
                // dst[t] = src[t + k - pad]
                let lo = pad.saturating_sub(k);
                let hi = (len + pad).saturating_sub(k).min(len);
                if lo < hi {
                    dst[lo..hi].copy_from_slice(&src[lo + k - pad..hi + k - pad]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back onto `grad`.
pub(crate) fn col2im(cols_grad: &[f64], ci: usize, batch: usize, len: usize, kernel: usize, grad: &mut [f64]) {
    let cols = batch * len;
    let pad = (kernel - 1) / 2;
    for c in 0..ci {
        for k in 0..kernel {
            let row = &cols_grad[(c * kernel + k) * cols..(c * kernel + k + 1) * cols];
            for b in 0..batch {
                let src = &row[b * len..(b + 1) * len];
                let dst = &mut grad[c * cols + b * len..c * cols + (b + 1) * len];
                let lo = pad.saturating_sub(k);
                let hi = (len + pad).saturating_sub(k).min(len);
                for t in lo..hi {
                    dst[t + k - pad] += src[t];
                }
            }
        }
    }
}

/// Bin `[start, end)` of adaptive average pooling from `len` to `out` bins.
pub(crate) fn adaptive_bin(i: usize, len: usize, out: usize) -> (usize, usize) {
    (i * len / out, ((i + 1) * len).div_ceil(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_for_all_transposes() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.7).sin()).collect();
        let at: Vec<f64> = (0..k * m).map(|i| a[(i % m) * k + i / m]).collect();
        let bt: Vec<f64> = (0..n * k).map(|i| b[(i % k) * n + i / k]).collect();
        let mut want = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                want[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![1.0; m * n];
                gemm(m, k, n, aa, ta, bb, tb, 0.0, &mut c);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gelu_values_and_slope() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.8413447460685429).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.15865525393145707).abs() < 1e-12);
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn im2col_adjoint_identity() {
        // <im2col(x), y> == <x, col2im(y)>
        let (ci, batch, len, kernel) = (2, 3, 7, 8);
        let x: Vec<f64> = (0..ci * batch * len).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut cols = Vec::new();
        im2col(&x, ci, batch, len, kernel, &mut cols);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&y, ci, batch, len, kernel, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // Centre tap of the kernel reproduces the input.
        let pad = (kernel - 1) / 2;
        let cols_n = batch * len;
        assert_eq!(&cols[pad * cols_n..(pad + 1) * cols_n], &x[..cols_n]);
    }

    #[test]
    fn adaptive_bins_cover_input() {
        for (len, out) in [(52, 16), (16, 16), (5, 3), (3, 5)] {
            assert_eq!(adaptive_bin(0, len, out).0, 0);
            assert_eq!(adaptive_bin(out - 1, len, out).1, len);
            for i in 0..out {
                let (s, e) = adaptive_bin(i, len, out);
                assert!(s < e);
            }
        }
    }
}
