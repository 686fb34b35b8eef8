//! Seeded parameter sweeps comparing the methods against ground truth.
//!
//! A sweep varies one of `sigma`, `t` or `m` over a grid. Every
//! `(grid point, repeat)` pair gets its own synthetic instance, shared by
//! all methods in that cell; method-specific randomness (task shuffling,
//! random starts) is keyed additionally by the method name, so adding a
//! method never changes another method's numbers.

mod csv_io;
mod plot;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{mom_init, random_init};
use crate::metrics::{lower_bound_curve, subspace_error, SubspaceError};
use crate::model::{compute_spectrum, generate_instance, InstanceSpec, Subspace};
use crate::rng::{derive_seed, Stream};
use crate::solvers::{fit, SolverConfig, TaskSchedule};

pub use csv_io::{emit_csv, read_csv, to_csv_string, CSV_HEADER};
pub use plot::{emit_plot, render_svg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Varying {
    Sigma,
    T,
    M,
}

impl Varying {
    pub fn name(self) -> &'static str {
        match self {
            Varying::Sigma => "sigma",
            Varying::T => "t",
            Varying::M => "m",
        }
    }
}

impl fmt::Display for Varying {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Varying {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(Varying::Sigma),
            "t" => Ok(Varying::T),
            "m" => Ok(Varying::M),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep parameter {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Alternating minimization from the method-of-moments start.
    Mllam,
    /// Alternating minimization over well-conditioned subsets, MoM start.
    Mllams,
    /// The method-of-moments estimate alone.
    Mom,
    /// Alternating minimization from a Haar-random start.
    RandomInit,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Mllam,
        Method::Mllams,
        Method::Mom,
        Method::RandomInit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mllam => "mllam",
            Method::Mllams => "mllams",
            Method::Mom => "mom",
            Method::RandomInit => "random_init",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Method::Mllam => 1,
            Method::Mllams => 2,
            Method::Mom => 3,
            Method::RandomInit => 4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Parameters held fixed across a sweep; the varied one is overridden per point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    pub d: usize,
    pub r: usize,
    pub t: usize,
    pub m: usize,
    pub sigma: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub varying: Varying,
    /// Strictly increasing positive values; `t` and `m` values are rounded to integers.
    pub grid: Vec<f64>,
    pub fixed: FixedParams,
    pub methods: Vec<Method>,
    #[serde(default = "default_schedule")]
    pub schedule: TaskSchedule,
    /// Worker threads for the cell pool; `None` uses the global rayon pool.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Write measured wall time to `wall_ms`. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_schedule() -> TaskSchedule {
    TaskSchedule::ReuseAll
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

/// Integer grid value: exact when within rounding noise of an integer, else rounded up.
fn integer_point(value: f64) -> usize {
    let nearest = value.round();
    if (value - nearest).abs() <= 1e-9 * value.abs().max(1.0) {
        nearest as usize
    } else {
        value.ceil() as usize
    }
}

impl SweepSpec {
    fn base(varying: Varying, grid: Vec<f64>, fixed: FixedParams) -> Self {
        Self {
            varying,
            grid,
            fixed,
            methods: vec![Method::Mllam, Method::Mom],
            schedule: TaskSchedule::ReuseAll,
            workers: None,
            record_wall_time: false,
        }
    }

    /// Noise sweep: `sigma` from 1e-4 to 1e2, `d = 100, r = 5, t = 200, m = 25, K = 20`.
    pub fn noise_preset(seed: u64) -> Self {
        let fixed = FixedParams {
            d: 100,
            r: 5,
            t: 200,
            m: 25,
            sigma: 1.0,
            k: 20,
            repeats: 5,
            seed,
        };
        Self::base(Varying::Sigma, logspace(1e-4, 1e2, 13), fixed)
    }

    /// Task-count sweep: `t` from 10 to 3163 with `m = 25, sigma = 1`.
    pub fn tasks_preset(seed: u64) -> Self {
        let fixed = FixedParams {
            d: 100,
            r: 5,
            t: 200,
            m: 25,
            sigma: 1.0,
            k: 20,
            repeats: 5,
            seed,
        };
        Self::base(Varying::T, logspace(10.0, 10f64.powf(3.5), 6), fixed)
    }

    /// Per-task sample sweep: `m` from 5 to 78125 with `t = 20, sigma = 1`.
    pub fn samples_preset(seed: u64) -> Self {
        let fixed = FixedParams {
            d: 100,
            r: 5,
            t: 20,
            m: 25,
            sigma: 1.0,
            k: 20,
            repeats: 5,
            seed,
        };
        Self::base(Varying::M, (1..=7).map(|p| 5f64.powi(p)).collect(), fixed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.grid.is_empty() {
            return bad("sweep grid is empty".into());
        }
        if self.grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad(format!(
                "grid values must be positive and finite: {:?}",
                self.grid
            ));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("grid must be strictly increasing: {:?}", self.grid));
        }
        if self.fixed.repeats == 0 {
            return bad("repeats must be >= 1".into());
        }
        if self.fixed.k == 0 {
            return bad("K must be >= 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be >= 1".into());
        }
        if self.varying != Varying::Sigma {
            let points: Vec<usize> = self.grid.iter().map(|&v| integer_point(v)).collect();
            if points.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!(
                    "{} grid collapses after rounding: {points:?}",
                    self.varying
                ));
            }
        }
        for index in 0..self.grid.len() {
            self.instance_spec(index, 0)
                .validate()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    fn instance_spec(&self, index: usize, repeat: usize) -> InstanceSpec {
        let f = self.fixed;
        let value = self.grid[index];
        let mut spec = InstanceSpec {
            d: f.d,
            r: f.r,
            t: f.t,
            m: f.m,
            sigma: f.sigma,
            seed: derive_seed(
                f.seed,
                &[Stream::SweepCell as u64, index as u64, repeat as u64],
            ),
        };
        match self.varying {
            Varying::Sigma => spec.sigma = value,
            Varying::T => spec.t = integer_point(value),
            Varying::M => spec.m = integer_point(value),
        }
        spec
    }

    /// Value written to the `value` column (the integer actually used for `t`/`m`).
    pub fn point_value(&self, index: usize) -> f64 {
        match self.varying {
            Varying::Sigma => self.grid[index],
            _ => integer_point(self.grid[index]) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub param: Varying,
    pub value: f64,
    pub repeat: usize,
    pub frob: f64,
    pub spectral: f64,
    pub rescaled: f64,
    pub lower_bound: f64,
    pub wall_ms: f64,
    /// Seed of the cell's instance.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub method: Method,
    pub value: f64,
    pub repeat: usize,
    pub message: String,
}

impl fmt::Display for CellFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at value {} repeat {}: {}",
            self.method, self.value, self.repeat, self.message
        )
    }
}

/// Rows sorted by `(method, value, repeat)`. Failed cells keep a row with NaN metrics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<CellFailure>,
}

impl SweepResult {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut methods: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        methods.sort();
        methods.dedup();
        methods
    }

    /// `(value, median frob)` per grid point for `method`, ignoring NaN rows.
    pub fn median_series(&self, method: Method) -> Vec<(f64, f64)> {
        median_by_value(
            self.rows
                .iter()
                .filter(|r| r.method == method)
                .map(|r| (r.value, r.frob)),
        )
    }

    /// `(value, median lower bound)` per grid point.
    pub fn lower_bound_series(&self) -> Vec<(f64, f64)> {
        median_by_value(self.rows.iter().map(|r| (r.value, r.lower_bound)))
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

fn median_by_value(points: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut points: Vec<(f64, f64)> = points.filter(|(_, y)| !y.is_nan()).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let x = points[i].0;
        let mut ys: Vec<f64> = points[i..]
            .iter()
            .take_while(|p| p.0 == x)
            .map(|p| p.1)
            .collect();
        i += ys.len();
        out.push((x, median(&mut ys)));
    }
    out
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(series: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = series.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn method_config(spec: &SweepSpec, method: Method, seed: u64) -> SolverConfig {
    let base = if method == Method::Mllams {
        SolverConfig::mllams()
    } else {
        SolverConfig::mllam()
    };
    SolverConfig {
        iterations: spec.fixed.k,
        task_schedule: spec.schedule,
        shuffle_seed: seed,
        ..base
    }
}

fn run_method(
    spec: &SweepSpec,
    method: Method,
    instance: &crate::model::ProblemInstance,
    mom: &Result<Subspace>,
    seed: u64,
) -> Result<SubspaceError> {
    let u_star = &instance
        .ground_truth()
        .ok_or(Error::MissingGroundTruth("sweep instances"))?
        .u_star;
    let start = || -> Result<Subspace> {
        match mom {
            Ok(u) => Ok(u.clone()),
            Err(e) => Err(Error::Eigen(format!("method-of-moments start failed: {e}"))),
        }
    };
    let estimate = match method {
        Method::Mom => start()?,
        Method::Mllam | Method::Mllams => {
            fit(instance, &start()?, &method_config(spec, method, seed))?.final_u
        }
        Method::RandomInit => {
            let (d, r) = instance.dims();
            let init = random_init(d, r, seed)?;
            fit(instance, &init, &method_config(spec, method, seed))?.final_u
        }
    };
    subspace_error(&estimate, u_star)
}

fn run_cell(spec: &SweepSpec, index: usize, repeat: usize) -> (Vec<SweepRow>, Vec<CellFailure>) {
    let ispec = spec.instance_spec(index, repeat);
    let value = spec.point_value(index);
    let mut rows = Vec::with_capacity(spec.methods.len());
    let mut failures = Vec::new();
    let failed_row = |method: Method| SweepRow {
        method,
        param: spec.varying,
        value,
        repeat,
        frob: f64::NAN,
        spectral: f64::NAN,
        rescaled: f64::NAN,
        lower_bound: f64::NAN,
        wall_ms: 0.0,
        seed: ispec.seed,
    };

    let prepared = generate_instance(&ispec).and_then(|instance| {
        let gt = instance
            .ground_truth()
            .ok_or(Error::MissingGroundTruth("sweep instances"))?;
        let stats = compute_spectrum(&gt.v_star)?;
        let lb = lower_bound_curve(
            ispec.sigma,
            stats.lambda_max,
            stats.lambda_min,
            ispec.d,
            ispec.r,
            ispec.m,
            ispec.t,
        );
        Ok((instance, lb.value))
    });
    let (instance, lower_bound) = match prepared {
        Ok(p) => p,
        Err(e) => {
            for &method in &spec.methods {
                rows.push(failed_row(method));
                failures.push(CellFailure {
                    method,
                    value,
                    repeat,
                    message: format!("instance generation: {e}"),
                });
            }
            return (rows, failures);
        }
    };

    let needs_mom = spec.methods.iter().any(|m| *m != Method::RandomInit);
    let mom_started = Instant::now();
    let mom = if needs_mom {
        mom_init(&instance)
    } else {
        Err(Error::Eigen("not computed".into()))
    };
    let mom_elapsed = mom_started.elapsed();

    for &method in &spec.methods {
        let seed = derive_seed(
            spec.fixed.seed,
            &[
                Stream::SweepCell as u64,
                index as u64,
                repeat as u64,
                method.tag(),
            ],
        );
        let started = Instant::now();
        let outcome = run_method(spec, method, &instance, &mom, seed);
        let mut elapsed = started.elapsed();
        if method != Method::RandomInit {
            elapsed += mom_elapsed;
        }
        match outcome {
            Ok(err) => rows.push(SweepRow {
                method,
                param: spec.varying,
                value,
                repeat,
                frob: err.frob,
                spectral: err.spectral,
                rescaled: err.rescaled_frob,
                lower_bound,
                wall_ms: if spec.record_wall_time {
                    elapsed.as_secs_f64() * 1e3
                } else {
                    0.0
                },
                seed: ispec.seed,
            }),
            Err(e) => {
                log::warn!(
                    "{method} failed at {}={value} repeat {repeat}: {e}",
                    spec.varying
                );
                rows.push(SweepRow {
                    lower_bound,
                    ..failed_row(method)
                });
                failures.push(CellFailure {
                    method,
                    value,
                    repeat,
                    message: e.to_string(),
                });
            }
        }
    }
    (rows, failures)
}

/// Runs every `(grid point, repeat)` cell, in parallel, and assembles the
/// rows in `(method, value, repeat)` order.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|i| (0..spec.fixed.repeats).map(move |rep| (i, rep)))
        .collect();
    let run = || -> Vec<(Vec<SweepRow>, Vec<CellFailure>)> {
        cells
            .par_iter()
            .map(|&(i, rep)| run_cell(spec, i, rep))
            .collect()
    };
    let outputs = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    let mut result = SweepResult::default();
    for (rows, failures) in outputs {
        result.rows.extend(rows);
        result.failures.extend(failures);
    }
    result.rows.sort_by(|a, b| {
        a.method
            .name()
            .cmp(b.method.name())
            .then(a.value.total_cmp(&b.value))
            .then(a.repeat.cmp(&b.repeat))
    });
    Ok(result)
}
