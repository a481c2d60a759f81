//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Replace `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `|m_ij - m_ji|` relative to the largest absolute entry.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).amax() / scale
}

/// Diagonal jitter `1e-12 * trace / dim` used when a factorization fails.
pub fn jitter_amount(m: &DMatrix<f64>) -> f64 {
    1e-12 * m.trace() / m.nrows().max(1) as f64
}

/// Cholesky factorization that retries once with [`jitter_amount`] added to
/// the diagonal. Returns the factor and whether jitter was applied.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, bool)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some((c, false));
    }
    let jitter = jitter_amount(m);
    if !(jitter > 0.0) {
        return None;
    }
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += jitter;
    }
    Cholesky::new(jittered).map(|c| (c, true))
}

/// Numerical rank with tolerance `rel_tol * largest singular value`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Indices of rows that are linear combinations of the rows before them.
///
/// The tolerance is relative to the largest singular value of the whole matrix,
/// so the answer does not depend on how many rows were already scanned.
pub fn dependent_rows(m: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let sv_max = m.clone().svd(false, false).singular_values.max();
    let abs_tol = rel_tol * sv_max;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for i in 0..n {
        // Modified Gram-Schmidt against the accepted rows, twice for stability.
        let mut v: DVector<f64> = m.row(i).transpose();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= abs_tol.max(f64::MIN_POSITIVE) {
            dependent.push(i);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Dense inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(m.clone()).map(|c| symmetrize(&c.inverse()))
}

/// Build a `DMatrix` from row vectors, checking that it is rectangular.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
