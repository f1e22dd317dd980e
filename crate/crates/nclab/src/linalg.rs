//! Thin wrappers around the dense complex linear-algebra backend.

use crate::{Error, Result};
use ndarray::{Array1, Array2};
use ndarray_linalg::{EigValsh, Inverse, Norm, Solve, UPLO};
use num_complex::Complex64;

pub type CMat = Array2<Complex64>;
pub type CVec = Array1<Complex64>;

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Kronecker product, row-major block layout: (a ⊗ b)[ip+k, jq+l] = a[i,j] b[k,l].
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (m, n) = a.dim();
    let (p, q) = b.dim();
    let mut out = Array2::zeros((m * p, n * q));
    for i in 0..m {
        for j in 0..n {
            let aij = a[[i, j]];
            if aij == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..p {
                for l in 0..q {
                    out[[i * p + k, j * q + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn eigvalsh(a: &CMat) -> Result<Vec<f64>> {
    let vals = a
        .eigvalsh(UPLO::Lower)
        .map_err(|e| Error::Backend(format!("eigvalsh: {e}")))?;
    Ok(vals.to_vec())
}

/// Solve `a x = b` for dense complex `a` via LU.
pub fn solve(a: &CMat, b: &CVec) -> Result<CVec> {
    a.solve(b).map_err(|e| Error::Backend(format!("solve: {e}")))
}

pub fn identity(n: usize) -> CMat {
    Array2::eye(n)
}

/// Largest absolute eigenvalue of a Hermitian matrix.
pub fn hermitian_op_norm(a: &CMat) -> Result<f64> {
    let vals = eigvalsh(a)?;
    Ok(vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Dense inverse via LU.
pub fn inv(a: &CMat) -> Result<CMat> {
    a.inv().map_err(|e| Error::Backend(format!("inv: {e}")))
}

/// Frobenius norm, used for residual checks.
pub fn fro_norm(a: &CMat) -> f64 {
    a.norm_l2()
}

/// Matrix exponential by scaling and squaring with a truncated Taylor core.
///
/// The scaled matrix has norm <= 1/2, so 24 Taylor terms put the core error
/// below machine precision before the squaring steps.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = fro_norm(a);
    let k = if norm <= 0.5 {
        0
    } else {
        (norm / 0.5).log2().ceil() as u32
    };
    let scale = Complex64::new(1.0 / f64::powi(2.0, k as i32), 0.0);
    let b = a.mapv(|z| z * scale);
    let mut sum = identity(n);
    let mut term = identity(n);
    for j in 1..=24u32 {
        term = term.dot(&b).mapv(|z| z / j as f64);
        sum += &term;
        if fro_norm(&term) < 1e-18 * fro_norm(&sum) {
            break;
        }
    }
    for _ in 0..k {
        sum = sum.dot(&sum);
    }
    sum
}
