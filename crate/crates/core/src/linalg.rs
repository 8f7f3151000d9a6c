//! Dense symmetric eigendecomposition (cyclic Jacobi).
//!
//! Patch dimensionality stays small (p²·c, typically ≤ 75), so the Jacobi
//! method is fast and gives near-machine-precision eigenpairs.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::{from_f64, Scalar};

const MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix: `a = v · diag(values) · vᵀ`.
///
/// Returns eigenvalues (unsorted) and the orthonormal eigenvector matrix
/// with eigenvectors as columns.
pub fn symmetric_eigen<T: Scalar>(a: &Array2<T>) -> Result<(Vec<T>, Array2<T>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::shape("square matrix", format!("{}×{}", n, a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in symmetric matrix".into()));
    }

    let mut m = a.clone();
    let mut v = Array2::<T>::eye(n);
    let tol = T::epsilon() * from_f64::<T>(1e2) * frobenius(a).max(T::one());

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (from_f64::<T>(2.0) * apq);
                let t = if theta >= T::zero() {
                    T::one() / (theta + (theta * theta + T::one()).sqrt())
                } else {
                    -T::one() / (-theta + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                rotate(&mut m, p, q, c, s);
                // accumulate the rotation into the eigenvector matrix
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }

    let values: Vec<T> = (0..n).map(|i| m[[i, i]]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigenvalue iteration diverged".into()));
    }
    Ok((values, v))
}

/// Apply the Jacobi rotation J(p,q,c,s) as m ← JᵀmJ, touching only rows and
/// columns p, q.
fn rotate<T: Scalar>(m: &mut Array2<T>, p: usize, q: usize, c: T, s: T) {
    let n = m.nrows();
    let app = m[[p, p]];
    let aqq = m[[q, q]];
    let apq = m[[p, q]];

    let two = from_f64::<T>(2.0);
    m[[p, p]] = c * c * app - two * s * c * apq + s * s * aqq;
    m[[q, q]] = s * s * app + two * s * c * apq + c * c * aqq;
    m[[p, q]] = T::zero();
    m[[q, p]] = T::zero();

    for i in 0..n {
        if i == p || i == q {
            continue;
        }
        let aip = m[[i, p]];
        let aiq = m[[i, q]];
        m[[i, p]] = c * aip - s * aiq;
        m[[p, i]] = m[[i, p]];
        m[[i, q]] = s * aip + c * aiq;
        m[[q, i]] = m[[i, q]];
    }
}

fn frobenius<T: Scalar>(m: &Array2<T>) -> T {
    m.iter().map(|&v| v * v).sum::<T>().sqrt()
}

fn off_diagonal_norm<T: Scalar>(m: &Array2<T>) -> T {
    let n = m.nrows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[[i, j]] * m[[i, j]];
            }
        }
    }
    acc.sqrt()
}
