//! Dense linear-algebra helpers: numerical rank, least squares, null spaces.

use nalgebra::{DMatrix, DVector};

/// Singular-value cutoff: `max(nrows, ncols) * eps * sigma_max`.
pub fn rank_tolerance(nrows: usize, ncols: usize, singular_values: &[f64]) -> f64 {
    let sigma_max = singular_values.iter().copied().fold(0.0_f64, f64::max);
    nrows.max(ncols) as f64 * f64::EPSILON * sigma_max
}

/// Numerical rank of a matrix via SVD.
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let svals = svd.singular_values.as_slice();
    let tol = rank_tolerance(m.nrows(), m.ncols(), svals);
    svals.iter().filter(|&&s| s > tol).count()
}

/// Minimum-norm least-squares solution of `a x = b` via SVD.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let tol = rank_tolerance(a.nrows(), a.ncols(), svd.singular_values.as_slice());
    svd.solve(b, tol)
        .expect("SVD solve with computed factors cannot fail")
        .column(0)
        .into_owned()
}

/// Orthonormal basis of the left null space of `a` (kernel of `aᵀ`),
/// returned as the columns of an `nrows × (nrows - rank)` matrix.
pub fn left_null_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let svd = a.clone().svd(true, false);
    let u = svd.u.as_ref().expect("u requested");
    let tol = rank_tolerance(a.nrows(), a.ncols(), svd.singular_values.as_slice());

    // Project the identity onto the orthogonal complement of the range,
    // then re-orthonormalize the projector's dominant directions.
    let mut projector = DMatrix::<f64>::identity(n, n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let col = u.column(k);
            projector -= col * col.transpose();
        }
    }
    let psvd = projector.svd(true, false);
    let pu = psvd.u.as_ref().expect("u requested");
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for (k, &s) in psvd.singular_values.iter().enumerate() {
        if s > 0.5 {
            cols.push(pu.column(k).into_owned());
        }
    }
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&cols)
}
