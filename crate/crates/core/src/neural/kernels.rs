//! Dense kernels on row-major `f64` buffers.

use super::spec::ConvGeom;

/// Batch-normalization epsilon.
pub(crate) const BN_EPS: f64 = 1e-5;

/// `c = a · b`, with `a` `m × k` and `b` `k × n`.
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm(m, k, n, a, (k as isize, 1), b, (n as isize, 1), c, 0.0);
}

/// `c += aᵀ · b`, with `a` stored `k × m` and `b` `k × n`.
pub(crate) fn matmul_at_b_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm(m, k, n, a, (1, m as isize), b, (n as isize, 1), c, 1.0);
}

/// `c = a · bᵀ`, with `a` `m × k` and `b` stored `n × k`.
pub(crate) fn matmul_a_bt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm(m, k, n, a, (k as isize, 1), b, (1, k as isize), c, 0.0);
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if beta == 0.0 {
        c[..m * n].fill(0.0);
    }
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: the assertion above keeps every strided access in bounds for
    // the layouts the three wrappers pass.
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

/// Unfolds an NHWC batch into `(batch · out_h · out_w) × (kh · kw · cin)`.
pub(crate) fn im2col(g: &ConvGeom, batch: usize, x: &[f64]) -> Vec<f64> {
    let cols = g.kh * g.kw * g.cin;
    let mut out = vec![0.0; batch * g.out_h * g.out_w * cols];
    for_each_tap(g, batch, |row, col, src| {
        out[row * cols + col..row * cols + col + g.cin].copy_from_slice(&x[src..src + g.cin]);
    });
    out
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub(crate) fn col2im(g: &ConvGeom, batch: usize, cols_grad: &[f64]) -> Vec<f64> {
    let cols = g.kh * g.kw * g.cin;
    let mut out = vec![0.0; batch * g.in_h * g.in_w * g.cin];
    for_each_tap(g, batch, |row, col, dst| {
        for c in 0..g.cin {
            out[dst + c] += cols_grad[row * cols + col + c];
        }
    });
    out
}

/// Calls `f(patch row, patch column of channel 0, input offset of channel 0)`
/// for every in-bounds kernel tap; padding taps are skipped.
fn for_each_tap(g: &ConvGeom, batch: usize, mut f: impl FnMut(usize, usize, usize)) {
    for b in 0..batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = (b * g.out_h + oy) * g.out_w + ox;
                for dy in 0..g.kh {
                    let iy = (oy * g.sh + dy) as isize - g.pad_t as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for dx in 0..g.kw {
                        let ix = (ox * g.sw + dx) as isize - g.pad_l as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let src = ((b * g.in_h + iy as usize) * g.in_w + ix as usize) * g.cin;
                        f(row, (dy * g.kw + dx) * g.cin, src);
                    }
                }
            }
        }
    }
}

/// Per-column mean and biased variance of a `rows × cols` matrix.
pub(crate) fn column_moments(rows: usize, cols: usize, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; cols];
    for r in x.chunks_exact(cols).take(rows) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0; cols];
    for r in x.chunks_exact(cols).take(rows) {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= rows as f64);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    fn transpose(r: usize, c: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = x[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_layouts() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).cos()).collect();
        let want = naive(m, k, n, &a, &b);
        let close = |x: &[f64]| x.iter().zip(&want).all(|(p, q)| (p - q).abs() < 1e-12);

        let mut c = vec![f64::NAN; m * n];
        matmul(m, k, n, &a, &b, &mut c);
        assert!(close(&c));

        let mut c = vec![0.0; m * n];
        matmul_at_b_acc(m, k, n, &transpose(m, k, &a), &b, &mut c);
        assert!(close(&c));

        let mut c = vec![0.0; m * n];
        matmul_a_bt(m, k, n, &a, &transpose(k, n, &b), &mut c);
        assert!(close(&c));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = ConvGeom {
            in_h: 3,
            in_w: 4,
            cin: 2,
            kh: 2,
            kw: 3,
            sh: 2,
            sw: 1,
            out_h: 2,
            out_w: 4,
            pad_t: 0,
            pad_l: 1,
        };
        let batch = 2;
        let x: Vec<f64> = (0..batch * 3 * 4 * 2).map(|i| (i as f64 * 0.7).sin()).collect();
        let cols = im2col(&g, batch, &x);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 1.3).cos()).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&col2im(&g, batch, &y)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
