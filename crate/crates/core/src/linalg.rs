//! Dense complex helpers shared by the transforms and the readout solvers.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unitary DFT of every column in place. `inverse` selects the `e^{+j}` kernel.
pub fn dft_columns(mat: &mut CMat, inverse: bool) {
    let rows = mat.nrows();
    if rows == 0 {
        return;
    }
    let fft = plan(rows, inverse);
    let scale = 1.0 / (rows as f64).sqrt();
    // Column-major storage: each column is a contiguous chunk.
    for col in mat.as_mut_slice().chunks_exact_mut(rows) {
        fft.process(col);
        col.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Unitary DFT of every row in place.
pub fn dft_rows(mat: &mut CMat, inverse: bool) {
    let (rows, cols) = mat.shape();
    if cols == 0 {
        return;
    }
    let fft = plan(cols, inverse);
    let scale = 1.0 / (cols as f64).sqrt();
    let mut buf = vec![ZERO; cols];
    for r in 0..rows {
        for c in 0..cols {
            buf[c] = mat[(r, c)];
        }
        fft.process(&mut buf);
        for c in 0..cols {
            mat[(r, c)] = buf[c] * scale;
        }
    }
}

/// Unnormalized forward 2D DFT.
pub fn dft2(mat: &CMat) -> CMat {
    let mut out = mat.clone();
    dft_columns(&mut out, false);
    dft_rows(&mut out, false);
    let s = ((out.nrows() * out.ncols()) as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= s);
    out
}

/// Inverse of [`dft2`] (carries the `1/(rows*cols)` factor).
pub fn idft2(mat: &CMat) -> CMat {
    let mut out = mat.clone();
    dft_columns(&mut out, true);
    dft_rows(&mut out, true);
    let s = 1.0 / ((out.nrows() * out.ncols()) as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= s);
    out
}

/// Ridge-regularized least squares `argmin ||A X - B||_F^2 + lambda ||X||_F^2`.
///
/// Solved through the SVD of `A`, so `lambda = 0` yields the minimum-norm
/// pseudoinverse solution `A^+ B` for any shape and rank.
pub fn ridge_solve(a: &CMat, b: &CMat, lambda: f64) -> CMat {
    ridge_solve_cond(a, b, lambda).0
}

/// [`ridge_solve`] that also reports the condition number of `A` over its
/// numerically nonzero singular values.
pub fn ridge_solve_cond(a: &CMat, b: &CMat, lambda: f64) -> (CMat, f64) {
    assert_eq!(a.nrows(), b.nrows(), "ridge_solve: row mismatch");
    let cols = a.ncols();
    if a.nrows() == 0 || cols == 0 {
        return (CMat::zeros(cols, b.ncols()), f64::INFINITY);
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let v_t = svd.v_t.as_ref().expect("svd v_t");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let tol = smax * (a.nrows().max(cols) as f64) * f64::EPSILON;

    let mut utb = u.adjoint() * b;
    for (i, &s) in sv.iter().enumerate() {
        let f = if lambda > 0.0 {
            s / (s * s + lambda)
        } else if s > tol {
            1.0 / s
        } else {
            0.0
        };
        utb.row_mut(i).iter_mut().for_each(|v| *v *= f);
    }
    let smin = sv.iter().cloned().filter(|&s| s > tol).fold(f64::INFINITY, f64::min);
    let cond = if smax > 0.0 { smax / smin } else { f64::INFINITY };
    (v_t.adjoint() * utb, cond)
}

/// Squared Frobenius norm.
pub fn energy(mat: &CMat) -> f64 {
    mat.iter().map(|v| v.norm_sqr()).sum()
}

/// Copies the rows selected by `keep` into a new matrix.
pub fn select_rows(mat: &CMat, keep: &[usize]) -> CMat {
    CMat::from_fn(keep.len(), mat.ncols(), |r, c| mat[(keep[r], c)])
}
