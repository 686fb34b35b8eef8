//! Alternating minimization over a shared subspace and per-task regressors.
//!
//! Each round fits every active task's `r` coefficients on the first half of
//! its samples with the subspace held fixed, then refits the `d x r`
//! subspace on the second halves with those coefficients held fixed, and
//! re-orthonormalizes it with a QR step. With subset selection enabled,
//! only tasks whose projected first-half Hessian is well conditioned take
//! part in a round.

mod select;
mod updates;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::metrics::{subspace_error, SubspaceError};
use crate::model::{ProblemInstance, RegressorSet, Subspace, TaskView};
use crate::rng::{stream_rng, Stream};

pub use select::{hessian_passes, projected_hessian, select_tasks};
pub use updates::{
    apply_a, assemble_dense, conjugate_gradient, empirical_risk, u_rhs, u_update, v_update,
    UUpdate, VUpdate,
};

/// Which tasks a round may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSchedule {
    /// Round `k` of `K` uses the `k`-th of `K` disjoint blocks of the shuffled tasks.
    Partition,
    /// Every round uses every task.
    ReuseAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum USolver {
    /// Matrix-free conjugate gradient.
    Cg,
    /// Assembled `dr x dr` system, minimum-norm eigen solve.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Number of rounds `K`.
    pub iterations: usize,
    pub task_schedule: TaskSchedule,
    pub shuffle_seed: u64,
    /// Relative singular-value cutoff for pseudoinverses.
    pub v_solver_tol: f64,
    pub u_solver: USolver,
    /// Relative residual target of the CG solve.
    pub cg_tol: f64,
    /// Defaults to `10 d r` when unset.
    pub cg_max_iters: Option<usize>,
    pub subset_sigma_min: f64,
    pub subset_sigma_max: f64,
    pub use_subset_selection: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            task_schedule: TaskSchedule::ReuseAll,
            shuffle_seed: 0,
            v_solver_tol: 1e-10,
            u_solver: USolver::Cg,
            cg_tol: 1e-10,
            cg_max_iters: None,
            subset_sigma_min: 0.5,
            subset_sigma_max: 10.0,
            use_subset_selection: false,
        }
    }
}

impl SolverConfig {
    /// Plain alternating minimization.
    pub fn mllam() -> Self {
        Self::default()
    }

    /// Alternating minimization over well-conditioned task subsets.
    pub fn mllams() -> Self {
        Self {
            use_subset_selection: true,
            ..Self::default()
        }
    }

    pub fn with_iterations(mut self, k: usize) -> Self {
        self.iterations = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "iteration count K must be at least 1".into(),
            ));
        }
        if !(0.0 < self.subset_sigma_min && self.subset_sigma_min < self.subset_sigma_max) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < subset_sigma_min < subset_sigma_max, got {} and {}",
                self.subset_sigma_min, self.subset_sigma_max
            )));
        }
        if !(self.cg_tol > 0.0) || !(self.v_solver_tol >= 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Orthonormal basis of `span(Û)`, with `diag(R) >= 0`.
///
/// A rank-deficient `Û` means the iteration has collapsed; callers abort.
pub fn qr_step(u_hat: &DMatrix<f64>) -> Result<Subspace> {
    Subspace::orthonormalize(u_hat)
}

/// Round count `⌈log2(λr² m t / (λ1 σ² μ d r²))⌉`, clamped to `[1, 64]`.
#[allow(clippy::too_many_arguments)]
pub fn default_k(
    lambda_max: f64,
    lambda_min: f64,
    sigma: f64,
    mu: f64,
    d: usize,
    r: usize,
    m: usize,
    t: usize,
) -> usize {
    const MAX_K: usize = 64;
    if sigma == 0.0 {
        return MAX_K;
    }
    let ratio = lambda_min * lambda_min * (m * t) as f64
        / (lambda_max * sigma * sigma * mu * d as f64 * (r * r) as f64);
    if ratio.is_nan() || ratio <= 0.0 {
        return 1;
    }
    let k = ratio.log2().ceil();
    if k >= MAX_K as f64 {
        MAX_K
    } else if k < 1.0 {
        1
    } else {
        k as usize
    }
}

/// Half-open block `[⌊t k / K⌋, ⌊t (k+1) / K⌋)` for the zero-based round `k`.
pub fn partition_block(t: usize, k: usize, rounds: usize) -> std::ops::Range<usize> {
    (t * k / rounds)..(t * (k + 1) / rounds)
}

/// Per-round trace of a [`fit`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub final_u: Subspace,
    /// Empty when the instance has no ground truth.
    pub per_iteration_errors: Vec<SubspaceError>,
    pub selected_task_counts: Vec<usize>,
    pub wall_times: Vec<Duration>,
    /// Rounds skipped because no task was active.
    pub skipped_iterations: usize,
    /// Active tasks whose regressor design was rank deficient, per round.
    pub rank_deficient_counts: Vec<usize>,
    /// CG iterations per round (zero for skipped rounds and the dense solver).
    pub cg_iterations: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct FitReportRecord {
    d: usize,
    r: usize,
    /// Row-major.
    final_u: Vec<f64>,
    per_iteration_errors: Vec<SubspaceError>,
    selected_task_counts: Vec<usize>,
    wall_times_ms: Vec<f64>,
    skipped_iterations: usize,
    rank_deficient_counts: Vec<usize>,
    cg_iterations: Vec<usize>,
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        let basis = self.final_u.basis();
        let record = FitReportRecord {
            d: basis.nrows(),
            r: basis.ncols(),
            final_u: basis.transpose().as_slice().to_vec(),
            per_iteration_errors: self.per_iteration_errors.clone(),
            selected_task_counts: self.selected_task_counts.clone(),
            wall_times_ms: self
                .wall_times
                .iter()
                .map(|d| d.as_secs_f64() * 1e3)
                .collect(),
            skipped_iterations: self.skipped_iterations,
            rank_deficient_counts: self.rank_deficient_counts.clone(),
            cg_iterations: self.cg_iterations.clone(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: FitReportRecord = serde_json::from_str(text)?;
        if rec.final_u.len() != rec.d * rec.r {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", rec.d * rec.r),
                actual: format!("{} entries", rec.final_u.len()),
            });
        }
        Ok(Self {
            final_u: Subspace::new(DMatrix::from_row_slice(rec.d, rec.r, &rec.final_u))?,
            per_iteration_errors: rec.per_iteration_errors,
            selected_task_counts: rec.selected_task_counts,
            wall_times: rec
                .wall_times_ms
                .iter()
                .map(|ms| Duration::from_secs_f64(ms / 1e3))
                .collect(),
            skipped_iterations: rec.skipped_iterations,
            rank_deficient_counts: rec.rank_deficient_counts,
            cg_iterations: rec.cg_iterations,
        })
    }

    pub fn final_error(&self) -> Option<SubspaceError> {
        self.per_iteration_errors.last().copied()
    }
}

/// Runs `cfg.iterations` rounds from `u_init`.
///
/// The result depends only on `(instance, u_init, cfg)`; per-task work runs
/// on rayon but every reduction is ordered by task.
pub fn fit(instance: &ProblemInstance, u_init: &Subspace, cfg: &SolverConfig) -> Result<FitReport> {
    cfg.validate()?;
    let (d, r) = instance.dims();
    if u_init.basis().shape() != (d, r) {
        return Err(Error::ShapeMismatch {
            expected: shape(d, r),
            actual: shape(u_init.ambient_dim(), u_init.rank()),
        });
    }

    let t = instance.num_tasks();
    let mut order: Vec<usize> = (0..t).collect();
    order.shuffle(&mut stream_rng(cfg.shuffle_seed, Stream::TaskShuffle, 0));
    let (first_halves, second_halves): (Vec<TaskView<'_>>, Vec<TaskView<'_>>) = order
        .iter()
        .map(|&i| instance.tasks()[i].split_halves())
        .unzip();

    let truth = instance.ground_truth().map(|gt| &gt.u_star);
    let rounds = cfg.iterations;
    let mut u = u_init.clone();
    let mut report = FitReport {
        final_u: u.clone(),
        per_iteration_errors: Vec::with_capacity(if truth.is_some() { rounds } else { 0 }),
        selected_task_counts: Vec::with_capacity(rounds),
        wall_times: Vec::with_capacity(rounds),
        skipped_iterations: 0,
        rank_deficient_counts: Vec::with_capacity(rounds),
        cg_iterations: Vec::with_capacity(rounds),
    };

    for k in 0..rounds {
        let started = Instant::now();
        let block = match cfg.task_schedule {
            TaskSchedule::Partition => partition_block(t, k, rounds),
            TaskSchedule::ReuseAll => 0..t,
        };
        let active: Vec<usize> = if cfg.use_subset_selection {
            select_tasks(&u, &first_halves, block, cfg)
        } else {
            block.collect()
        };

        let (rank_deficient, cg_iterations) = if active.is_empty() {
            log::warn!(
                "round {}: no active tasks, keeping the current subspace",
                k + 1
            );
            report.skipped_iterations += 1;
            (0, 0)
        } else {
            let fits: Vec<VUpdate> = active
                .par_iter()
                .map(|&i| v_update(&u, &first_halves[i], cfg.v_solver_tol))
                .collect();
            let rank_deficient = fits.iter().filter(|f| f.is_rank_deficient()).count();
            let rows: Vec<_> = fits.into_iter().map(|f| f.coeffs).collect();
            let v = RegressorSet::from_rows(&rows, r)?;
            let halves: Vec<TaskView<'_>> = active.iter().map(|&i| second_halves[i]).collect();
            let step = u_update(&halves, &v, cfg)?;
            u = qr_step(&step.u_hat)?;
            (rank_deficient, step.iterations)
        };

        report.selected_task_counts.push(active.len());
        report.rank_deficient_counts.push(rank_deficient);
        report.cg_iterations.push(cg_iterations);
        report.wall_times.push(started.elapsed());
        if let Some(u_star) = truth {
            report
                .per_iteration_errors
                .push(subspace_error(&u, u_star)?);
        }
    }

    report.final_u = u;
    Ok(report)
}
