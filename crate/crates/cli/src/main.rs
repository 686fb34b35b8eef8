//! `mllam`: generate instances, fit subspaces, adapt new tasks and run sweeps.
//!
//! Exit status: 0 on success, 2 when a sweep finished with failed cells,
//! 1 on invalid configuration or any other error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mllam_core::adapt::{adapt_samples, sample_new_task};
use mllam_core::harness::{emit_csv, emit_plot, read_csv, run_sweep, Method, SweepSpec};
use mllam_core::init::{mom_init, random_init};
use mllam_core::metrics::{regressor_mse, subspace_error};
use mllam_core::model::{generate_instance, load_instance, save_instance, InstanceSpec};
use mllam_core::solvers::{fit, FitReport, SolverConfig, TaskSchedule, USolver};

#[derive(Parser)]
#[command(
    name = "mllam",
    version,
    about = "Alternating minimization for multi-task linear regression on a shared subspace"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic instance and write it to a directory.
    Generate(GenerateArgs),
    /// Fit a subspace to an instance directory.
    Fit(FitArgs),
    /// Adapt fresh tasks on a fitted subspace and report their error.
    Adapt(AdaptArgs),
    /// Run a parameter sweep and write CSV and SVG output.
    Sweep(SweepArgs),
    /// Render a sweep CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitMethod {
    Mllam,
    Mllams,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitKind {
    Mom,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Schedule {
    ReuseAll,
    Partition,
}

impl From<Schedule> for TaskSchedule {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::ReuseAll => TaskSchedule::ReuseAll,
            Schedule::Partition => TaskSchedule::Partition,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Cg,
    Dense,
}

#[derive(Args)]
struct FitArgs {
    /// Instance directory written by `generate`.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "mllam")]
    method: FitMethod,
    #[arg(long, value_enum, default_value = "mom")]
    init: InitKind,
    /// Solver configuration JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long, value_enum)]
    schedule: Option<Schedule>,
    #[arg(long = "u-solver", value_enum)]
    u_solver: Option<Solver>,
    /// Seed for task shuffling and the random start.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AdaptArgs {
    /// Instance directory with ground truth; new tasks are drawn from its subspace.
    #[arg(long)]
    instance: PathBuf,
    /// Fit report whose `final_u` is used.
    #[arg(long)]
    report: PathBuf,
    /// Samples per new task.
    #[arg(long = "m-plus")]
    m_plus: usize,
    #[arg(long, default_value_t = 200)]
    tasks: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Noise,
    Tasks,
    Samples,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep specification JSON.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated subset of mllam, mllams, mom, random_init.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    #[arg(long, value_enum)]
    schedule: Option<Schedule>,
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall time in the CSV (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
    /// Output directory for sweep.csv and sweep.svg.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Subspace rank, for the sqrt(r) reference line.
    #[arg(long)]
    r: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Errors that map to exit status 1 before any work is done.
#[derive(Debug)]
struct InvalidConfig(String);

impl std::fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidConfig {}

fn generate(args: GenerateArgs) -> Result<ExitCode> {
    let spec = InstanceSpec {
        d: args.d,
        r: args.r,
        t: args.t,
        m: args.m,
        sigma: args.sigma,
        seed: args.seed,
    };
    let instance = generate_instance(&spec)?;
    save_instance(&instance, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    log::info!(
        "wrote {} tasks to {}",
        instance.num_tasks(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn fit_command(args: FitArgs) -> Result<ExitCode> {
    let instance = load_instance(&args.instance)
        .with_context(|| format!("reading {}", args.instance.display()))?;
    let mut cfg = match &args.config {
        Some(path) => {
            serde_json::from_str(&fs::read_to_string(path)?).context("parsing solver config")?
        }
        None => SolverConfig::default(),
    };
    if matches!(args.method, FitMethod::Mllams) {
        cfg.use_subset_selection = true;
    }
    if let Some(k) = args.k {
        cfg.iterations = k;
    }
    if let Some(s) = args.schedule {
        cfg.task_schedule = s.into();
    }
    if let Some(s) = args.u_solver {
        cfg.u_solver = match s {
            Solver::Cg => USolver::Cg,
            Solver::Dense => USolver::Dense,
        };
    }
    cfg.shuffle_seed = args.seed;
    cfg.validate().map_err(|e| InvalidConfig(e.to_string()))?;

    let (d, r) = instance.dims();
    let start = match args.init {
        InitKind::Mom => mom_init(&instance)?,
        InitKind::Random => random_init(d, r, args.seed)?,
    };
    let report = fit(&instance, &start, &cfg)?;
    fs::write(&args.out, report.to_json()?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    match report.final_error() {
        Some(e) => println!(
            "frob {:e}  spectral {:e}  rescaled {:e}",
            e.frob, e.spectral, e.rescaled_frob
        ),
        None => println!(
            "fit finished ({} rounds); no ground truth to score against",
            cfg.iterations
        ),
    }
    Ok(ExitCode::SUCCESS)
}

fn adapt_command(args: AdaptArgs) -> Result<ExitCode> {
    if args.m_plus == 0 {
        return Err(InvalidConfig("--m-plus must be at least 1".into()).into());
    }
    let instance = load_instance(&args.instance)?;
    let u_star = &instance
        .ground_truth()
        .context("adapt draws new tasks from the instance's ground-truth subspace")?
        .u_star;
    let report = FitReport::from_json(&fs::read_to_string(&args.report)?)?;
    let u = &report.final_u;
    let mut errors = Vec::with_capacity(args.tasks);
    for index in 0..args.tasks {
        let task = sample_new_task(u_star, args.m_plus, args.sigma, args.seed, index as u64);
        let reg = adapt_samples(u, &task.examples, &task.observations, 1e-10)?;
        errors.push(regressor_mse(u, &reg.coeffs, u_star, &task.v_star)?);
    }
    let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    let summary = serde_json::json!({
        "m_plus": args.m_plus,
        "tasks": args.tasks,
        "sigma": args.sigma,
        "mean_mse": mean,
        "subspace_frob_error": subspace_error(u, u_star)?.frob,
        "mse": errors,
    });
    println!(
        "mean MSE over {} tasks with m+ = {}: {mean:e}",
        args.tasks, args.m_plus
    );
    if let Some(out) = &args.out {
        fs::write(out, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep_spec(args: &SweepArgs) -> Result<SweepSpec> {
    let mut spec = match (&args.config, args.preset) {
        (Some(path), _) => serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| InvalidConfig(format!("{}: {e}", path.display())))?,
        (None, Some(Preset::Noise)) | (None, None) => SweepSpec::noise_preset(0),
        (None, Some(Preset::Tasks)) => SweepSpec::tasks_preset(0),
        (None, Some(Preset::Samples)) => SweepSpec::samples_preset(0),
    };
    let f = &mut spec.fixed;
    f.d = args.d.unwrap_or(f.d);
    f.r = args.r.unwrap_or(f.r);
    f.t = args.t.unwrap_or(f.t);
    f.m = args.m.unwrap_or(f.m);
    f.sigma = args.sigma.unwrap_or(f.sigma);
    f.k = args.k.unwrap_or(f.k);
    f.seed = args.seed.unwrap_or(f.seed);
    f.repeats = args.repeats.unwrap_or(f.repeats);
    if !args.method.is_empty() {
        spec.methods = args
            .method
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<_, _>>()
            .map_err(|e| InvalidConfig(e.to_string()))?;
    }
    if let Some(s) = args.schedule {
        spec.schedule = s.into();
    }
    if args.workers.is_some() {
        spec.workers = args.workers;
    }
    spec.record_wall_time |= args.timing;
    spec.validate().map_err(|e| InvalidConfig(e.to_string()))?;
    Ok(spec)
}

fn sweep_command(args: SweepArgs) -> Result<ExitCode> {
    let spec = sweep_spec(&args)?;
    fs::create_dir_all(&args.out)?;
    fs::write(
        args.out.join("spec.json"),
        serde_json::to_string_pretty(&spec)?,
    )?;
    let result = run_sweep(&spec)?;
    emit_csv(&result, &args.out.join("sweep.csv"))?;
    emit_plot(&result, spec.fixed.r, &args.out.join("sweep.svg"))?;
    for method in &spec.methods {
        let series = result.median_series(*method);
        let cells: Vec<String> = series.iter().map(|(x, y)| format!("{x}:{y:.3e}")).collect();
        println!("{method:<12} {}", cells.join("  "));
    }
    if result.is_complete() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in &result.failures {
            eprintln!("cell failed: {failure}");
        }
        Ok(ExitCode::from(2))
    }
}

fn plot_command(args: PlotArgs) -> Result<ExitCode> {
    let result =
        read_csv(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    if result.rows.iter().any(|r| r.param != result.rows[0].param) {
        bail!("{} mixes sweep parameters", args.input.display());
    }
    emit_plot(&result, args.r, &args.out)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit_command(a),
        Command::Adapt(a) => adapt_command(a),
        Command::Sweep(a) => sweep_command(a),
        Command::Plot(a) => plot_command(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
