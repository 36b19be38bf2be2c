//! Symmetric-definite generalized eigenproblem and orthonormal-complement
//! helpers used by the F-step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge is applied once the spectral condition number of the total matrix
/// exceeds this limit (or the matrix is numerically singular).
const COND_LIMIT: f64 = 1e12;
const RIDGE_SCALE: f64 = 1e-8;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Ridge magnitude for a symmetric PSD matrix per the conditioning policy:
/// `1e-8 * trace(s)/dim` when cond(s) > 1e12 or s is singular, else 0.
pub(crate) fn ridge_lambda(s: &DMatrix<f64>) -> f64 {
    let eigs = symmetrize(s).symmetric_eigenvalues();
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        return RIDGE_SCALE; // zero matrix: any positive ridge makes it definite
    }
    if min <= 0.0 || max / min > COND_LIMIT {
        RIDGE_SCALE * s.trace() / s.nrows() as f64
    } else {
        0.0
    }
}

/// Leading generalized eigenpair of `(sb, s_reg)` where `s_reg` must be
/// symmetric positive definite. Solved by Cholesky reduction to an ordinary
/// symmetric problem. The returned vector has unit Euclidean norm.
pub(crate) fn leading_gen_eigvec_definite(
    sb: &DMatrix<f64>,
    s_reg: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64)> {
    let n = s_reg.nrows();
    let chol = symmetrize(s_reg)
        .cholesky()
        .ok_or_else(|| Error::NonFinite("Cholesky of regularized total matrix".into()))?;
    let l = chol.l();
    // M = L^-1 sb L^-T
    let mut m = sb.clone();
    l.solve_lower_triangular_mut(&mut m);
    let mut mt = m.transpose();
    l.solve_lower_triangular_mut(&mut mt);
    let m = symmetrize(&mt);
    let eig = m.symmetric_eigen();
    let mut best = 0;
    for i in 1..n {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v = eig.eigenvectors.column(best).into_owned();
    // u = L^-T v
    let mut u = v;
    l.transpose().solve_upper_triangular_mut(&mut u);
    let norm = u.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::NonFinite("generalized eigenvector".into()));
    }
    Ok((u / norm, eig.eigenvalues[best]))
}

/// Leading generalized eigenpair of `(sb, s)` with the identity-ridge policy.
pub(crate) fn leading_gen_eigvec(
    sb: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64)> {
    let lambda = ridge_lambda(s);
    let s_reg = if lambda > 0.0 {
        s + DMatrix::identity(s.nrows(), s.ncols()) * lambda
    } else {
        s.clone()
    };
    match leading_gen_eigvec_definite(sb, &s_reg) {
        Ok(r) => Ok(r),
        Err(_) if lambda == 0.0 => {
            // conditioning estimate passed but Cholesky still failed; retry ridged
            let lambda = RIDGE_SCALE * s.trace().max(1.0) / s.nrows() as f64;
            let s_reg = s + DMatrix::identity(s.nrows(), s.ncols()) * lambda;
            leading_gen_eigvec_definite(sb, &s_reg)
        }
        Err(e) => Err(e),
    }
}

/// Orthonormal basis of the complement of `span(basis)` in R^p, built from
/// pivoted canonical vectors by modified Gram-Schmidt with one
/// re-orthogonalization pass. `basis` columns must be orthonormal.
pub(crate) fn orthonormal_complement(basis: &[DVector<f64>], p: usize) -> DMatrix<f64> {
    let r = basis.len();
    assert!(r <= p);
    let mut all: Vec<DVector<f64>> = basis.to_vec();
    // residual norms of each canonical vector against the current basis
    while all.len() < p {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..p {
            let mut v = DVector::zeros(p);
            v[i] = 1.0;
            for b in &all {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(n, _)| norm > *n) {
                best = Some((norm, v));
            }
        }
        let (_, mut v) = best.expect("p > 0");
        v /= v.norm();
        // re-orthogonalization pass
        for b in &all {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        v /= v.norm();
        all.push(v);
    }
    let cols = &all[r..];
    DMatrix::from_columns(cols)
}

/// In-place Gram-Schmidt on the columns of `u` (normalizes the first column,
/// orthogonalizes each later column against the previous ones).
pub(crate) fn orthonormalize_columns(u: &mut DMatrix<f64>) -> Result<()> {
    let d = u.ncols();
    for j in 0..d {
        for i in 0..j {
            let c = u.column(i).dot(&u.column(j));
            let prev = u.column(i).into_owned();
            let mut col = u.column_mut(j);
            col.axpy(-c, &prev, 1.0);
        }
        // second pass for numerical safety
        for i in 0..j {
            let c = u.column(i).dot(&u.column(j));
            let prev = u.column(i).into_owned();
            let mut col = u.column_mut(j);
            col.axpy(-c, &prev, 1.0);
        }
        let norm = u.column(j).norm();
        if !(norm > 1e-300) {
            return Err(Error::NonFinite(format!(
                "column {j} collapsed during orthonormalization"
            )));
        }
        u.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(())
}
