//! Few-shot adaptation on a frozen subspace.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{sample_coefficients, sample_observations, Subspace, TaskData, TaskView};
use crate::rng::{derive_seed, Stream};
use crate::solvers::v_update;

/// Coefficients of a new task inside a learned subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedRegressor {
    pub subspace: Subspace,
    pub coeffs: DVector<f64>,
    pub n_samples_used: usize,
}

impl AdaptedRegressor {
    /// Full `d`-dimensional regressor `U v`.
    pub fn regressor(&self) -> DVector<f64> {
        self.subspace.basis() * &self.coeffs
    }
}

/// Fits the `r` coefficients of `new_task` on all of its samples, no split.
pub fn adapt(u: &Subspace, new_task: &TaskData, tol: f64) -> Result<AdaptedRegressor> {
    if new_task.dim() != u.ambient_dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("dimension {}", u.ambient_dim()),
            actual: format!("dimension {}", new_task.dim()),
        });
    }
    adapt_view(u, &new_task.view(), tol)
}

/// Same as [`adapt`] for raw sample arrays, which may hold a single sample.
pub fn adapt_samples(
    u: &Subspace,
    examples: &DMatrix<f64>,
    observations: &DVector<f64>,
    tol: f64,
) -> Result<AdaptedRegressor> {
    if examples.nrows() != observations.len() || examples.ncols() != u.ambient_dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("n x {} examples with n observations", u.ambient_dim()),
            actual: format!(
                "{}x{} examples, {} observations",
                examples.nrows(),
                examples.ncols(),
                observations.len()
            ),
        });
    }
    let view = TaskView {
        examples: examples.rows(0, examples.nrows()),
        observations: observations.rows(0, observations.len()),
        task_id: 0,
    };
    adapt_view(u, &view, tol)
}

fn adapt_view(u: &Subspace, view: &TaskView<'_>, tol: f64) -> Result<AdaptedRegressor> {
    if view.is_empty() {
        return Err(Error::InsufficientSamples(
            "adaptation needs at least one sample".into(),
        ));
    }
    let fit = v_update(u, view, tol);
    Ok(AdaptedRegressor {
        subspace: u.clone(),
        coeffs: fit.coeffs,
        n_samples_used: view.len(),
    })
}

/// A fresh task drawn inside a known subspace, for adaptation experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct NewTask {
    pub examples: DMatrix<f64>,
    pub observations: DVector<f64>,
    pub v_star: DVector<f64>,
}

/// Draws new task `index` with `v* ~ N(0, I_r)` and `m_plus` samples.
///
/// Tasks are keyed by `(seed, index)` and samples are drawn in order, so a
/// draw with fewer samples is a prefix of one with more.
pub fn sample_new_task(
    u_star: &Subspace,
    m_plus: usize,
    sigma: f64,
    seed: u64,
    index: u64,
) -> NewTask {
    let v_star = sample_coefficients(u_star.rank(), seed, Stream::AdaptTask, index);
    let key = derive_seed(index, &[Stream::AdaptTask as u64]);
    let (examples, observations) =
        sample_observations(&(u_star.basis() * &v_star), m_plus, sigma, seed, key);
    NewTask {
        examples,
        observations,
        v_star,
    }
}

/// Noiseless prediction `<x, U v>`.
pub fn predict(reg: &AdaptedRegressor, x: &DVector<f64>) -> Result<f64> {
    if x.len() != reg.subspace.ambient_dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("length {}", reg.subspace.ambient_dim()),
            actual: format!("length {}", x.len()),
        });
    }
    Ok(x.dot(&reg.regressor()))
}
