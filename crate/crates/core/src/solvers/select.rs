//! Well-conditioned task selection.
//!
//! A task enters the active set when the spectrum of its first-half
//! Hessian `H_i = Uᵀ S_i U` lies inside `[subset_sigma_min, subset_sigma_max]`.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::SolverConfig;
use crate::linalg::sym_eigen_desc;
use crate::model::{Subspace, TaskView};

/// `Uᵀ S U` with `S = (1/n) Xᵀ X` over the half, computed as `(XU)ᵀ(XU) / n`.
pub fn projected_hessian(u: &Subspace, half: &TaskView<'_>) -> DMatrix<f64> {
    let xu = half.examples * u.basis();
    xu.tr_mul(&xu) / half.len() as f64
}

/// Whether a symmetric `r x r` Hessian passes both spectral thresholds.
pub fn hessian_passes(hessian: &DMatrix<f64>, cfg: &SolverConfig) -> bool {
    match sym_eigen_desc(hessian) {
        Ok((values, _)) => {
            let top = values[0];
            let bottom = values[values.len() - 1];
            bottom >= cfg.subset_sigma_min && top <= cfg.subset_sigma_max
        }
        Err(_) => false,
    }
}

/// Indices in `block` whose first half is well conditioned under `u`.
///
/// `first_halves` is indexed in schedule order. An empty result is legal.
pub fn select_tasks(
    u: &Subspace,
    first_halves: &[TaskView<'_>],
    block: Range<usize>,
    cfg: &SolverConfig,
) -> Vec<usize> {
    let keep: Vec<bool> = first_halves[block.clone()]
        .par_iter()
        .map(|half| hessian_passes(&projected_hessian(u, half), cfg))
        .collect();
    block
        .zip(keep)
        .filter_map(|(i, ok)| ok.then_some(i))
        .collect()
}
