//! The two halves of an alternating-minimization round.
//!
//! The regressor step is an `r`-dimensional least squares per task. The
//! subspace step solves the normal equations `A(Û) = B` of
//!
//! ```text
//! min_Û  Σ_i Σ_j (y_ij - <x_ij, Û v_i>)^2        (second halves)
//! ```
//!
//! with `A(U) = Σ_i S_i U v_i v_iᵀ` and `B = Σ_i (1/n_i) X_iᵀ y_i v_iᵀ`,
//! where `S_i = (1/n_i) X_iᵀ X_i`. `A` is self-adjoint and positive
//! semidefinite in the Frobenius inner product, so conjugate gradient
//! applies directly to the `d x r` unknown.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{SolverConfig, USolver};
use crate::error::{shape, Error, Result};
use crate::linalg::{frob_inner, sym_eigen_desc};
use crate::model::{RegressorSet, Subspace, TaskView};

/// Result of the per-task regressor fit.
#[derive(Debug, Clone, PartialEq)]
pub struct VUpdate {
    pub coeffs: DVector<f64>,
    /// Numerical rank of the `n x r` design `X U` after truncation.
    pub rank: usize,
}

impl VUpdate {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.coeffs.len()
    }
}

/// Least-squares fit of `y ≈ X U v` over `v`, via an SVD pseudoinverse that
/// drops singular values below `tol * σ_max`. Returns the minimum-norm
/// solution when the design is rank deficient.
pub fn v_update(u: &Subspace, half: &TaskView<'_>, tol: f64) -> VUpdate {
    let design = half.examples * u.basis();
    lstsq_pinv(design, &half.observations.into_owned(), tol)
}

pub(crate) fn lstsq_pinv(design: DMatrix<f64>, y: &DVector<f64>, tol: f64) -> VUpdate {
    let r = design.ncols();
    let svd = design.svd(true, true);
    let (left, right) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = tol * sigma_max;
    let projected = left.tr_mul(y);
    let mut scaled = DVector::zeros(svd.singular_values.len());
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            scaled[k] = projected[k] / s;
            rank += 1;
        }
    }
    let coeffs = if scaled.is_empty() {
        DVector::zeros(r)
    } else {
        right.tr_mul(&scaled)
    };
    VUpdate { coeffs, rank }
}

fn check_alignment(halves: &[TaskView<'_>], v: &RegressorSet) -> Result<()> {
    if halves.len() != v.num_tasks() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} regressor rows", halves.len()),
            actual: format!("{} rows", v.num_tasks()),
        });
    }
    Ok(())
}

fn check_operand(u_in: &DMatrix<f64>, halves: &[TaskView<'_>], v: &RegressorSet) -> Result<()> {
    check_alignment(halves, v)?;
    let d = halves.first().map_or(u_in.nrows(), TaskView::dim);
    if u_in.shape() != (d, v.rank()) {
        return Err(Error::ShapeMismatch {
            expected: shape(d, v.rank()),
            actual: shape(u_in.nrows(), u_in.ncols()),
        });
    }
    Ok(())
}

/// Sums `Σ_i a_i v_iᵀ` in task order, so the result does not depend on how
/// the `a_i` were scheduled across threads.
fn accumulate_rank_one(d: usize, columns: Vec<DVector<f64>>, v: &RegressorSet) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, v.rank());
    for (i, a) in columns.iter().enumerate() {
        out.ger(1.0, a, &v.coefficients().row(i).transpose(), 1.0);
    }
    out
}

/// `A(U_in) = Σ_i S_i U_in v_i v_iᵀ` without forming any `S_i`.
///
/// Each term is `(1/n_i) X_iᵀ (X_i (U_in v_i)) v_iᵀ`, an `O(n_i d + d r)` rank-one update.
pub fn apply_a(
    u_in: &DMatrix<f64>,
    halves: &[TaskView<'_>],
    v: &RegressorSet,
) -> Result<DMatrix<f64>> {
    check_operand(u_in, halves, v)?;
    Ok(apply_a_unchecked(u_in, halves, v))
}

fn apply_a_unchecked(
    u_in: &DMatrix<f64>,
    halves: &[TaskView<'_>],
    v: &RegressorSet,
) -> DMatrix<f64> {
    let columns: Vec<DVector<f64>> = halves
        .par_iter()
        .enumerate()
        .map(|(i, half)| {
            let w = u_in * v.coefficients().row(i).transpose();
            let fitted = half.examples * w;
            half.examples.tr_mul(&fitted) / half.len() as f64
        })
        .collect();
    accumulate_rank_one(u_in.nrows(), columns, v)
}

/// Right-hand side `B = Σ_i (1/n_i) X_iᵀ y_i v_iᵀ`.
pub fn u_rhs(halves: &[TaskView<'_>], v: &RegressorSet) -> Result<DMatrix<f64>> {
    check_alignment(halves, v)?;
    let d = halves.first().map(TaskView::dim).unwrap_or(0);
    let columns: Vec<DVector<f64>> = halves
        .par_iter()
        .map(|half| half.examples.tr_mul(&half.observations) / half.len() as f64)
        .collect();
    Ok(accumulate_rank_one(d, columns, v))
}

/// Dense `dr x dr` matrix of `A` acting on `vec(U)` (column-major, index `k d + a`).
pub fn assemble_dense(halves: &[TaskView<'_>], v: &RegressorSet) -> Result<DMatrix<f64>> {
    check_alignment(halves, v)?;
    let d = halves.first().map(TaskView::dim).unwrap_or(0);
    let r = v.rank();
    let blocks: Vec<DMatrix<f64>> = halves
        .par_iter()
        .map(|half| half.examples.tr_mul(&half.examples) / half.len() as f64)
        .collect();
    let mut dense = DMatrix::zeros(d * r, d * r);
    for (i, s) in blocks.iter().enumerate() {
        for k in 0..r {
            for l in 0..r {
                let weight = v.coefficients()[(i, k)] * v.coefficients()[(i, l)];
                if weight != 0.0 {
                    let mut block = dense.view_mut((k * d, l * d), (d, d));
                    block += s * weight;
                }
            }
        }
    }
    Ok(dense)
}

/// Solution of the subspace step and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct UUpdate {
    pub u_hat: DMatrix<f64>,
    /// CG iterations, zero for the dense path.
    pub iterations: usize,
    /// `|A(Û) - B|_F / |B|_F` at exit.
    pub relative_residual: f64,
}

/// Minimizes the second-half squared loss over `Û` for fixed regressors.
pub fn u_update(halves: &[TaskView<'_>], v: &RegressorSet, cfg: &SolverConfig) -> Result<UUpdate> {
    if halves.is_empty() || v.num_tasks() == 0 {
        return Err(Error::InvalidDimensions(
            "U-update needs at least one task".into(),
        ));
    }
    let rhs = u_rhs(halves, v)?;
    let (d, r) = rhs.shape();
    let update = match cfg.u_solver {
        USolver::Cg => {
            let max_iters = cfg.cg_max_iters.unwrap_or(10 * d * r);
            conjugate_gradient(
                |x| apply_a_unchecked(x, halves, v),
                &rhs,
                cfg.cg_tol,
                max_iters,
            )?
        }
        USolver::Dense => dense_solve(&assemble_dense(halves, v)?, &rhs, cfg.v_solver_tol)?,
    };
    let relative_residual = if cfg.u_solver == USolver::Dense {
        let bnorm = rhs.norm();
        let res = (apply_a_unchecked(&update.u_hat, halves, v) - &rhs).norm();
        if bnorm > 0.0 {
            res / bnorm
        } else {
            res
        }
    } else {
        update.relative_residual
    };
    Ok(UUpdate {
        relative_residual,
        ..update
    })
}

/// Conjugate gradient for a self-adjoint PSD operator on `d x r` matrices.
///
/// Starts at zero, so on a singular but consistent system the iterates stay
/// in the operator's range and converge to the minimum-norm solution.
pub fn conjugate_gradient<F>(
    apply: F,
    rhs: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<UUpdate>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let bnorm = rhs.norm();
    let mut x = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    if bnorm == 0.0 {
        return Ok(UUpdate {
            u_hat: x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut residual = rhs.clone();
    let mut direction = residual.clone();
    let mut rr = frob_inner(&residual, &residual);
    for iteration in 1..=max_iters {
        let ad = apply(&direction);
        let curvature = frob_inner(&direction, &ad);
        if !(curvature > 0.0) {
            // Direction in the null space: the residual cannot shrink further.
            return Err(Error::CgNotConverged {
                iterations: iteration,
                residual: rr.sqrt() / bnorm,
            });
        }
        let step = rr / curvature;
        x += &direction * step;
        residual -= &ad * step;
        let rr_next = frob_inner(&residual, &residual);
        if rr_next.sqrt() <= tol * bnorm {
            return Ok(UUpdate {
                u_hat: x,
                iterations: iteration,
                relative_residual: rr_next.sqrt() / bnorm,
            });
        }
        direction = &residual + &direction * (rr_next / rr);
        rr = rr_next;
    }
    Err(Error::CgNotConverged {
        iterations: max_iters,
        residual: rr.sqrt() / bnorm,
    })
}

/// Minimum-norm solve of the assembled system through its eigendecomposition.
fn dense_solve(dense: &DMatrix<f64>, rhs: &DMatrix<f64>, tol: f64) -> Result<UUpdate> {
    let (d, r) = rhs.shape();
    let (values, vectors) = sym_eigen_desc(dense)?;
    let top = values[0];
    if !(top > 0.0) {
        return Err(Error::SingularSystem(format!(
            "assembled {n}x{n} operator has no positive eigenvalue (every active regressor is zero)",
            n = d * r
        )));
    }
    let b = DVector::from_column_slice(rhs.as_slice());
    let coords = vectors.tr_mul(&b);
    let mut scaled = DVector::zeros(d * r);
    let mut rank = 0;
    for k in 0..d * r {
        if values[k] > tol * top {
            scaled[k] = coords[k] / values[k];
            rank += 1;
        }
    }
    if rank < d * r {
        log::debug!(
            "dense U-update: operator rank {rank} of {}; returning minimum-norm solution",
            d * r
        );
    }
    let x = &vectors * scaled;
    Ok(UUpdate {
        u_hat: DMatrix::from_column_slice(d, r, x.as_slice()),
        iterations: 0,
        relative_residual: 0.0,
    })
}

/// `½ Σ_i Σ_j (y_ij - <x_ij, U v_i>)^2` over the given halves.
pub fn empirical_risk(u: &DMatrix<f64>, halves: &[TaskView<'_>], v: &RegressorSet) -> Result<f64> {
    check_operand(u, halves, v)?;
    Ok(halves
        .iter()
        .enumerate()
        .map(|(i, half)| {
            let w = u * v.coefficients().row(i).transpose();
            0.5 * (half.observations - half.examples * w).norm_squared()
        })
        .sum())
}
