//! Thin helpers over faer used throughout the crate.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Accum, Mat, MatRef, Par};

use crate::{c64, Error, Result};

pub type CMat = Mat<c64>;

pub fn zeros(rows: usize, cols: usize) -> CMat {
    Mat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            c64::new(1.0, 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

pub fn diag(d: &[c64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { c64::new(0.0, 0.0) })
}

/// Owned conjugate transpose.
pub fn adjoint(m: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

/// Sequential GEMM. Fixed parallelism keeps results bit-reproducible.
pub fn mul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        a,
        b,
        c64::new(1.0, 0.0),
        Par::Seq,
    );
    out
}

pub fn sub(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub fn add(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

pub fn matvec(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    assert_eq!(a.ncols(), x.len());
    (0..a.nrows())
        .map(|i| (0..a.ncols()).fold(c64::new(0.0, 0.0), |acc, j| acc + a[(i, j)] * x[j]))
        .collect()
}

pub fn singular_values(m: MatRef<'_, c64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    m.singular_values()
        .map_err(|e| Error::Linalg(format!("svd did not converge: {e:?}")))
}

/// Spectral norm (largest singular value).
pub fn norm2(m: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

pub fn norm_fro(m: MatRef<'_, c64>) -> f64 {
    m.norm_l2()
}

/// Spectral norm for moderate sizes, Frobenius above `svd_cap` (an upper bound).
pub fn norm2_capped(m: MatRef<'_, c64>, svd_cap: usize) -> f64 {
    if m.nrows().max(m.ncols()) <= svd_cap {
        norm2(m).unwrap_or_else(|_| norm_fro(m))
    } else {
        norm_fro(m)
    }
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: MatRef<'_, c64>, rel_tol: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let Some(&smax) = s.first() else { return Ok(0) };
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel_tol * smax).count())
}

/// 2-norm condition number; infinite for singular input.
pub fn condition(m: MatRef<'_, c64>) -> Result<f64> {
    let s = singular_values(m)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

pub fn inverse(m: MatRef<'_, c64>) -> CMat {
    if m.nrows() == 0 {
        return Mat::zeros(0, 0);
    }
    m.partial_piv_lu().inverse()
}

pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    if a.nrows() == 0 {
        return Mat::zeros(0, b.ncols());
    }
    a.partial_piv_lu().solve(b)
}

pub fn vec_norm(x: &[c64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: MatRef<'_, c64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}
