//! Small dense helpers shared by the solver and the metrics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `M · diag(d)`.
pub fn scale_columns(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, &s) in out.column_iter_mut().zip(d.iter()) {
        col *= s;
    }
    out
}

/// `diag(d) · M`.
pub fn scale_rows(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut row, &s) in out.row_iter_mut().zip(d.iter()) {
        row *= s;
    }
    out
}

/// `‖R‖_{2,1}`: sum of the Euclidean norms of the rows.
pub fn l21_rows(r: &DMatrix<f64>) -> f64 {
    r.row_iter().map(|row| row.norm()).sum()
}

/// Sum of the Euclidean norms of the columns, i.e. `‖Rᵀ‖_{2,1}`.
pub fn l21_columns(r: &DMatrix<f64>) -> f64 {
    r.column_iter().map(|col| col.norm()).sum()
}

/// 2-norm condition number of a symmetric matrix from its eigenvalues.
/// Returns `+∞` for an exactly singular or non-finite matrix.
pub fn symmetric_condition(a: &DMatrix<f64>) -> f64 {
    if a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(a.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &e in eig.eigenvalues.iter() {
        lo = lo.min(e.abs());
        hi = hi.max(e.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Row-wise mean replicated across `cols` columns. Zero if `m` has no columns.
pub fn replicated_column_mean(m: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    let mean = if m.ncols() == 0 {
        DVector::zeros(m.nrows())
    } else {
        m.column_mean()
    };
    DMatrix::from_fn(m.nrows(), cols, |i, _| mean[i])
}
