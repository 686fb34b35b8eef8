//! Starting points for the alternating minimization.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::model::{random_basis, ProblemInstance, Subspace};
use crate::rng::Stream;

/// Weighted second moment `(1/N) Σ y² x xᵀ` over all `N` samples.
///
/// Its expectation is `(|w|² + σ²) I + 2 w wᵀ` per task, so the top-`r`
/// eigenspace of the task average is `span(U*)`.
pub fn moment_matrix(instance: &ProblemInstance) -> DMatrix<f64> {
    let d = instance.dims().0;
    let partials: Vec<DMatrix<f64>> = instance
        .tasks()
        .par_iter()
        .map(|task| {
            let x = task.examples();
            let mut weighted = x.clone();
            for (mut row, y) in weighted.row_iter_mut().zip(task.observations().iter()) {
                row *= y * y;
            }
            weighted.tr_mul(x)
        })
        .collect();
    let mut moment = DMatrix::zeros(d, d);
    for partial in &partials {
        moment += partial;
    }
    moment / instance.total_samples() as f64
}

/// Top-`r` eigenvectors of a symmetric matrix as an orthonormal basis.
pub fn top_eigenspace(mat: &DMatrix<f64>, r: usize) -> Result<Subspace> {
    if r == 0 || r > mat.nrows() || !mat.is_square() {
        return Err(Error::InvalidDimensions(format!(
            "cannot take {r} eigenvectors of a {}x{} matrix",
            mat.nrows(),
            mat.ncols()
        )));
    }
    let (_, vectors) = sym_eigen_desc(mat)?;
    // Re-orthonormalize to shave off eigensolver round-off.
    Subspace::orthonormalize(&vectors.columns(0, r).into_owned())
}

/// Method-of-moments initialization: top-`r` eigenspace of [`moment_matrix`].
pub fn mom_init(instance: &ProblemInstance) -> Result<Subspace> {
    let r = instance.dims().1;
    let total = instance.total_samples();
    if total < r {
        return Err(Error::InsufficientSamples(format!(
            "method of moments needs m t >= r, got {total} samples for r = {r}"
        )));
    }
    top_eigenspace(&moment_matrix(instance), r)
}

/// Haar-random `d x r` basis from `seed`.
pub fn random_init(d: usize, r: usize, seed: u64) -> Result<Subspace> {
    random_basis(d, r, seed, Stream::RandomInit, 0)
}
