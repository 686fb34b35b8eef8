//! Meta-learning of linear regressors that share an unknown `r`-dimensional
//! subspace of `R^d`, by alternating minimization.
//!
//! - [`model`]: tasks, instances, the synthetic generator, spectrum statistics.
//! - [`metrics`]: subspace distances and regressor error.
//! - [`init`]: method-of-moments and random starting subspaces.
//! - [`solvers`]: the regressor step, the subspace step (matrix-free CG or
//!   dense), QR, task selection and the [`solvers::fit`] loop.
//! - [`adapt`]: fitting a new task on a learned subspace.
//! - [`harness`]: seeded parameter sweeps with CSV and SVG output.
//!
//! ```no_run
//! use mllam_core::{init, model, solvers};
//!
//! let instance = model::generate_instance(&model::InstanceSpec {
//!     d: 100, r: 5, t: 200, m: 25, sigma: 0.1, seed: 1,
//! })?;
//! let start = init::mom_init(&instance)?;
//! let report = solvers::fit(&instance, &start, &solvers::SolverConfig::mllam())?;
//! println!("{:?}", report.final_error());
//! # Ok::<(), mllam_core::Error>(())
//! ```

// `!(x >= 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
mod error;
pub mod harness;
pub mod init;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
