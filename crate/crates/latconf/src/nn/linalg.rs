//! Dense double-precision kernels with exact backward passes.
//!
//! Matrices are row-major `rows x cols` slices. Model sizes stay in the
//! low hundreds, so plain loops are fast enough and easy to audit.

use super::NnError;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += s * x`
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// `y = W x`
pub fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; rows];
    matvec_accum(w, rows, cols, x, &mut y);
    y
}

/// `y += W x`
pub fn matvec_accum(w: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(y.len(), rows);
    for r in 0..rows {
        y[r] += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `dx += W^T dy` — the input-side adjoint of `matvec`.
pub fn matvec_t_accum(w: &[f64], rows: usize, cols: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(dy.len(), rows);
    debug_assert_eq!(dx.len(), cols);
    for r in 0..rows {
        axpy(dx, dy[r], &w[r * cols..(r + 1) * cols]);
    }
}

/// `dW += dy x^T` — the weight-side adjoint of `matvec`.
pub fn outer_accum(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(dw.len(), dy.len() * cols);
    for (r, &dyr) in dy.iter().enumerate() {
        axpy(&mut dw[r * cols..(r + 1) * cols], dyr, x);
    }
}

/// `y = W x + b` with shape validation on all operands.
pub fn affine(
    w: &[f64],
    rows: usize,
    cols: usize,
    x: &[f64],
    b: &[f64],
) -> Result<Vec<f64>, NnError> {
    if w.len() != rows * cols {
        return Err(NnError::ShapeMismatch {
            op: "affine weights",
            expected: rows * cols,
            got: w.len(),
        });
    }
    if x.len() != cols {
        return Err(NnError::ShapeMismatch { op: "affine input", expected: cols, got: x.len() });
    }
    if b.len() != rows {
        return Err(NnError::ShapeMismatch { op: "affine bias", expected: rows, got: b.len() });
    }
    let mut y = b.to_vec();
    matvec_accum(w, rows, cols, x, &mut y);
    Ok(y)
}

/// Exact partials of `affine`: returns `(dW, dx, db)` for upstream `dy`.
pub fn affine_backward(
    w: &[f64],
    rows: usize,
    cols: usize,
    x: &[f64],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; rows * cols];
    let mut dx = vec![0.0; cols];
    outer_accum(&mut dw, dy, x);
    matvec_t_accum(w, rows, cols, dy, &mut dx);
    (dw, dx, dy.to_vec())
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Softmax with max-subtraction; output sums to 1 and is invariant to
/// shifting all logits by a constant.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    debug_assert!(!z.is_empty());
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut a: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = a.iter().sum();
    for v in &mut a {
        *v /= s;
    }
    a
}

/// `dz_j = alpha_j (dalpha_j - sum_i alpha_i dalpha_i)`
pub fn softmax_backward(alpha: &[f64], dalpha: &[f64]) -> Vec<f64> {
    let s = dot(alpha, dalpha);
    alpha.iter().zip(dalpha).map(|(&a, &da)| a * (da - s)).collect()
}
