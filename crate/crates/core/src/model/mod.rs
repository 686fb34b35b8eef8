//! Problem data: tasks, subspaces, regressors, the synthetic Gaussian
//! low-rank generator and the spectrum statistics of a regressor set.
//!
//! A task `i` observes `y = <x, U* v*_i> + eps` with `x ~ N(0, I_d)` and
//! `eps ~ N(0, sigma^2)`. `U*` is a `d x r` orthonormal basis shared by all
//! tasks and `v*_i` is the task's `r`-dimensional coefficient vector.

mod io;

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::linalg;
use crate::rng::{stream_rng, Stream};

pub use io::{load_instance, save_instance, InstanceHeader, MAGIC};

/// Tolerance used to accept a basis as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// One regression task: `m` covariate rows and their observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    examples: DMatrix<f64>,
    observations: DVector<f64>,
    task_id: usize,
}

impl TaskData {
    pub fn new(examples: DMatrix<f64>, observations: DVector<f64>, task_id: usize) -> Result<Self> {
        if examples.nrows() != observations.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} observations", examples.nrows()),
                actual: format!("{} observations", observations.len()),
            });
        }
        if examples.nrows() < 2 {
            return Err(Error::InvalidDimensions(format!(
                "task {task_id} has m = {} samples, at least 2 are required",
                examples.nrows()
            )));
        }
        Ok(Self {
            examples,
            observations,
            task_id,
        })
    }

    pub fn examples(&self) -> &DMatrix<f64> {
        &self.examples
    }

    pub fn observations(&self) -> &DVector<f64> {
        &self.observations
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn num_samples(&self) -> usize {
        self.examples.nrows()
    }

    pub fn dim(&self) -> usize {
        self.examples.ncols()
    }

    /// View over every sample.
    pub fn view(&self) -> TaskView<'_> {
        TaskView {
            examples: self.examples.rows(0, self.num_samples()),
            observations: self.observations.rows(0, self.num_samples()),
            task_id: self.task_id,
        }
    }

    /// Splits the samples into `(first ⌊m/2⌋, remaining)`.
    ///
    /// The first half feeds the regressor update, the second the subspace update.
    pub fn split_halves(&self) -> (TaskView<'_>, TaskView<'_>) {
        let m = self.num_samples();
        let first = m / 2;
        let view = |start: usize, len: usize| TaskView {
            examples: self.examples.rows(start, len),
            observations: self.observations.rows(start, len),
            task_id: self.task_id,
        };
        (view(0, first), view(first, m - first))
    }
}

/// Free-function form of [`TaskData::split_halves`].
pub fn split_halves(task: &TaskData) -> (TaskView<'_>, TaskView<'_>) {
    task.split_halves()
}

/// Borrowed contiguous range of a task's samples.
#[derive(Debug, Clone, Copy)]
pub struct TaskView<'a> {
    pub examples: DMatrixView<'a, f64>,
    pub observations: DVectorView<'a, f64>,
    pub task_id: usize,
}

impl TaskView<'_> {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.examples.ncols()
    }
}

/// A `d x r` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Wraps `basis` after checking `BᵀB = I` to [`ORTHONORMAL_TOL`].
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        if basis.ncols() > basis.nrows() || basis.ncols() == 0 {
            return Err(Error::InvalidDimensions(format!(
                "subspace basis must be d x r with 1 <= r <= d, got {}",
                shape(basis.nrows(), basis.ncols())
            )));
        }
        let deviation = linalg::orthonormality_defect(&basis);
        if !(deviation <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self { basis })
    }

    /// Orthonormal factor (sign-normalized thin QR) of an arbitrary full-rank matrix.
    pub fn orthonormalize(mat: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            basis: linalg::orthonormal_factor(mat)?,
        })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

/// `t x r` matrix whose rows are per-task low-dimensional regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSet {
    coefficients: DMatrix<f64>,
}

impl RegressorSet {
    pub fn new(coefficients: DMatrix<f64>) -> Self {
        Self { coefficients }
    }

    /// Stacks per-task vectors as rows. All must share a length.
    pub fn from_rows(rows: &[DVector<f64>], r: usize) -> Result<Self> {
        let mut coefficients = DMatrix::zeros(rows.len(), r);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != r {
                return Err(Error::ShapeMismatch {
                    expected: format!("regressor of length {r}"),
                    actual: format!("length {}", row.len()),
                });
            }
            coefficients.set_row(i, &row.transpose());
        }
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn num_tasks(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn rank(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.coefficients.row(i).transpose()
    }
}

/// Ground-truth subspace and regressors of a synthetic instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub u_star: Subspace,
    pub v_star: RegressorSet,
}

/// A collection of tasks sharing ambient dimension `d`, plus optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    tasks: Vec<TaskData>,
    d: usize,
    r: usize,
    noise_sigma: f64,
    seed: Option<u64>,
    ground_truth: Option<GroundTruth>,
}

impl ProblemInstance {
    pub fn new(
        tasks: Vec<TaskData>,
        d: usize,
        r: usize,
        noise_sigma: f64,
        ground_truth: Option<GroundTruth>,
    ) -> Result<Self> {
        if r == 0 || r > d {
            return Err(Error::InvalidDimensions(format!(
                "need 1 <= r <= d, got d = {d}, r = {r}"
            )));
        }
        if tasks.is_empty() {
            return Err(Error::InvalidDimensions("instance has no tasks".into()));
        }
        if !(noise_sigma >= 0.0) {
            return Err(Error::InvalidDimensions(format!(
                "sigma must be >= 0, got {noise_sigma}"
            )));
        }
        if let Some(bad) = tasks.iter().find(|task| task.dim() != d) {
            return Err(Error::ShapeMismatch {
                expected: format!("task dimension {d}"),
                actual: format!("task {} has dimension {}", bad.task_id(), bad.dim()),
            });
        }
        if let Some(gt) = &ground_truth {
            if gt.u_star.basis().shape() != (d, r) {
                return Err(Error::ShapeMismatch {
                    expected: shape(d, r),
                    actual: shape(gt.u_star.ambient_dim(), gt.u_star.rank()),
                });
            }
            if gt.v_star.coefficients().shape() != (tasks.len(), r) {
                return Err(Error::ShapeMismatch {
                    expected: shape(tasks.len(), r),
                    actual: shape(gt.v_star.num_tasks(), gt.v_star.rank()),
                });
            }
        }
        Ok(Self {
            tasks,
            d,
            r,
            noise_sigma,
            seed: None,
            ground_truth,
        })
    }

    pub fn tasks(&self) -> &[TaskData] {
        &self.tasks
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d, self.r)
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Generator seed, for synthetic instances.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    /// Samples per task when every task has the same count.
    pub fn uniform_samples(&self) -> Option<usize> {
        let m = self.tasks[0].num_samples();
        self.tasks.iter().all(|t| t.num_samples() == m).then_some(m)
    }

    pub fn total_samples(&self) -> usize {
        self.tasks.iter().map(TaskData::num_samples).sum()
    }
}

/// Parameters of the synthetic Gaussian low-rank model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub d: usize,
    pub r: usize,
    pub t: usize,
    pub m: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.r == 0 || self.r > self.d {
            return Err(Error::InvalidDimensions(format!(
                "need 1 <= r <= d, got d = {}, r = {}",
                self.d, self.r
            )));
        }
        if self.t == 0 {
            return Err(Error::InvalidDimensions("need t >= 1 tasks".into()));
        }
        if self.m < 2 {
            return Err(Error::InvalidDimensions(format!(
                "need m >= 2 samples per task so both halves are non-empty, got m = {}",
                self.m
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidDimensions(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Filled row by row so a row is a contiguous run of the stream.
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Draws a Haar-distributed `d x r` basis from `(seed, stream, index)`.
pub fn random_basis(d: usize, r: usize, seed: u64, stream: Stream, index: u64) -> Result<Subspace> {
    if r == 0 || r > d {
        return Err(Error::InvalidDimensions(format!(
            "need 1 <= r <= d, got d = {d}, r = {r}"
        )));
    }
    let mut rng = stream_rng(seed, stream, index);
    Subspace::orthonormalize(&gaussian_matrix(&mut rng, d, r))
}

/// Samples `m` observations of the ambient regressor `w`.
///
/// Covariates come from `(seed, Covariates, key)` and noise from
/// `(seed, Noise, key)`, so changing `sigma` leaves the covariates untouched.
pub fn sample_observations(
    w: &DVector<f64>,
    m: usize,
    sigma: f64,
    seed: u64,
    key: u64,
) -> (DMatrix<f64>, DVector<f64>) {
    let examples = gaussian_matrix(&mut stream_rng(seed, Stream::Covariates, key), m, w.len());
    let mut noise_rng = stream_rng(seed, Stream::Noise, key);
    let mut observations = &examples * w;
    if sigma > 0.0 {
        for y in observations.iter_mut() {
            let eps: f64 = noise_rng.sample(StandardNormal);
            *y += sigma * eps;
        }
    }
    (examples, observations)
}

/// Draws a coefficient vector `v ~ N(0, I_r)` from `(seed, stream, key)`.
pub fn sample_coefficients(r: usize, seed: u64, stream: Stream, key: u64) -> DVector<f64> {
    let mut rng = stream_rng(seed, stream, key);
    DVector::from_iterator(r, (0..r).map(|_| rng.sample(StandardNormal)))
}

/// Draws a synthetic instance. Deterministic in `spec.seed` regardless of
/// the rayon pool size: each task owns its own random streams.
pub fn generate_instance(spec: &InstanceSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let InstanceSpec {
        d,
        r,
        t,
        m,
        sigma,
        seed,
    } = *spec;
    let u_star = random_basis(d, r, seed, Stream::SubspaceBasis, 0)?;

    let rows: Vec<DVector<f64>> = (0..t)
        .map(|i| sample_coefficients(r, seed, Stream::Regressor, i as u64))
        .collect();
    let v_star = RegressorSet::from_rows(&rows, r)?;

    let tasks = rows
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let (examples, observations) =
                sample_observations(&(u_star.basis() * v), m, sigma, seed, i as u64);
            TaskData::new(examples, observations, i)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut instance =
        ProblemInstance::new(tasks, d, r, sigma, Some(GroundTruth { u_star, v_star }))?;
    instance.seed = Some(seed);
    Ok(instance)
}

/// Spectrum of the task-diversity matrix `(r/t) VᵀV` and the incoherence of `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumStats {
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// `max_row_norm_sq / lambda_min`; `+inf` when `lambda_min` is zero.
    pub incoherence_mu: f64,
    pub max_row_norm_sq: f64,
}

/// Extreme eigenvalues of `(r/t) VᵀV` and `mu = max_i |v_i|^2 / lambda_min`.
pub fn compute_spectrum(v: &RegressorSet) -> Result<SpectrumStats> {
    let (t, r) = v.coefficients().shape();
    if t == 0 || r == 0 {
        return Err(Error::InvalidDimensions("empty regressor set".into()));
    }
    let gram = v.coefficients().tr_mul(v.coefficients()) * (r as f64 / t as f64);
    let (values, _) = linalg::sym_eigen_desc(&gram)?;
    // Rounding can push a zero eigenvalue slightly negative.
    let lambda_max = values[0].max(0.0);
    let lambda_min = values[r - 1].max(0.0);
    let max_row_norm_sq = v
        .coefficients()
        .row_iter()
        .map(|row| row.norm_squared())
        .fold(0.0, f64::max);
    let incoherence_mu = if lambda_min > 0.0 {
        max_row_norm_sq / lambda_min
    } else {
        f64::INFINITY
    };
    Ok(SpectrumStats {
        lambda_max,
        lambda_min,
        incoherence_mu,
        max_row_norm_sq,
    })
}
