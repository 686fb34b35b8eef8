//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin QR with the sign convention `diag(R) >= 0`.
///
/// Fails when a diagonal entry of `R` is negligible relative to the largest one.
pub fn orthonormal_factor(mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = mat.shape();
    if cols > rows {
        return Err(Error::InvalidDimensions(format!(
            "cannot orthonormalize {cols} columns in dimension {rows}"
        )));
    }
    if mat.iter().any(|x| !x.is_finite()) {
        return Err(Error::RankDeficient {
            column: 0,
            pivot: f64::NAN,
        });
    }
    let qr = mat.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    let scale = (0..cols).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    for k in 0..cols {
        let pivot = r[(k, k)];
        if scale == 0.0 || pivot.abs() <= 1e-12 * scale {
            return Err(Error::RankDeficient {
                column: k,
                pivot: pivot.abs(),
            });
        }
        if pivot < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    Ok(q)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
pub fn sym_eigen_desc(mat: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if mat.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let n = mat.nrows();
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Max-entry deviation of `BᵀB` from the identity.
pub fn orthonormality_defect(basis: &DMatrix<f64>) -> f64 {
    let gram = basis.tr_mul(basis);
    let n = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Frobenius inner product.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
