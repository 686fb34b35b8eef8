//! Exit criteria. Runs every criterion in sequence, prints one PASS/FAIL line
//! each, and exits non-zero if any failed.

use std::time::{Duration, Instant};

use mllam_core::adapt::{adapt_samples, sample_new_task};
use mllam_core::harness::{
    loglog_slope, run_sweep, to_csv_string, FixedParams, Method, SweepResult, SweepSpec, Varying,
};
use mllam_core::init::{mom_init, random_init, top_eigenspace};
use mllam_core::metrics::{regressor_mse, subspace_error};
use mllam_core::model::{generate_instance, InstanceSpec, RegressorSet, Subspace, TaskView};
use mllam_core::rng::{stream_rng, Stream};
use mllam_core::solvers::{
    apply_a, fit, select_tasks, u_update, v_update, SolverConfig, TaskSchedule, USolver,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, Stream::SweepCell, 9_999);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn criterion1_instance() -> mllam_core::model::ProblemInstance {
    generate_instance(&InstanceSpec {
        d: 20,
        r: 2,
        t: 128,
        m: 24,
        sigma: 0.0,
        seed: 2021,
    })
    .unwrap()
}

fn noiseless_recovery() -> Outcome {
    let instance = criterion1_instance();
    let u_star = &instance.ground_truth().unwrap().u_star;
    let started = Instant::now();
    let init = mom_init(&instance).map_err(|e| e.to_string())?;
    let cfg = SolverConfig {
        iterations: 25,
        task_schedule: TaskSchedule::ReuseAll,
        ..SolverConfig::mllam()
    };
    let plain = fit(&instance, &init, &cfg).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let plain_err = subspace_error(&plain.final_u, u_star).unwrap().frob;
    let subset = fit(
        &instance,
        &init,
        &SolverConfig {
            use_subset_selection: true,
            ..cfg
        },
    )
    .map_err(|e| e.to_string())?;
    let subset_err = subspace_error(&subset.final_u, u_star).unwrap().frob;
    check(
        plain_err <= 1e-8 && subset_err <= 1e-8 && elapsed < Duration::from_secs(10),
        format!("MLLAM frob {plain_err:.2e}, MLLAMS frob {subset_err:.2e} (<= 1e-8), MLLAM time {elapsed:.2?} (< 10 s)"),
    )
}

fn sweep(varying: Varying, grid: Vec<f64>, fixed: FixedParams) -> SweepResult {
    let spec = SweepSpec {
        varying,
        grid,
        fixed,
        methods: vec![Method::Mllam, Method::Mom],
        schedule: TaskSchedule::ReuseAll,
        workers: None,
        record_wall_time: false,
    };
    let result = run_sweep(&spec).expect("valid sweep");
    assert!(result.is_complete(), "failed cells: {:?}", result.failures);
    result
}

fn fmt_series(series: &[(f64, f64)]) -> String {
    series
        .iter()
        .map(|(x, y)| format!("{x}:{y:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

struct Sweeps {
    sigma: SweepResult,
    tasks: SweepResult,
    samples: SweepResult,
    times: [Duration; 3],
}

fn run_sweeps() -> Sweeps {
    let base = FixedParams {
        d: 50,
        r: 3,
        t: 400,
        m: 30,
        sigma: 1.0,
        k: 20,
        repeats: 5,
        seed: 77,
    };
    let mut times = [Duration::ZERO; 3];
    let clock = Instant::now();
    let sigma = sweep(Varying::Sigma, vec![1e-2, 1e-1, 1.0], base);
    times[0] = clock.elapsed();
    let clock = Instant::now();
    let tasks = sweep(Varying::T, vec![100.0, 400.0, 1600.0], base);
    times[1] = clock.elapsed();
    let clock = Instant::now();
    let samples = sweep(
        Varying::M,
        vec![40.0, 160.0, 640.0],
        FixedParams { t: 50, ..base },
    );
    times[2] = clock.elapsed();
    Sweeps {
        sigma,
        tasks,
        samples,
        times,
    }
}

fn sigma_proportionality(s: &Sweeps) -> Outcome {
    let alt = s.sigma.median_series(Method::Mllam);
    let mom = s.sigma.median_series(Method::Mom);
    let slope = loglog_slope(&alt);
    let mom_vals: Vec<f64> = mom.iter().map(|p| p.1).collect();
    let spread = mom_vals.iter().cloned().fold(0.0, f64::max)
        / mom_vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let dominated = alt.iter().zip(&mom).all(|(a, m)| m.1 > a.1);
    check(
        (0.8..=1.2).contains(&slope) && spread < 2.0 && dominated && s.times[0] < Duration::from_secs(120),
        format!(
            "MLLAM slope {slope:.3} in [0.8, 1.2]; MoM max/min {spread:.3} < 2; MoM > MLLAM at all points: {dominated}; \
             time {:.2?} (< 2 min) [mllam {}] [mom {}]",
            s.times[0],
            fmt_series(&alt),
            fmt_series(&mom)
        ),
    )
}

fn scaling(result: &SweepResult, time: Duration, label: &str) -> Outcome {
    let alt = result.median_series(Method::Mllam);
    let slope = loglog_slope(&alt);
    check(
        (-0.65..=-0.35).contains(&slope) && time < Duration::from_secs(180),
        format!("{label}: MLLAM slope {slope:.3} in [-0.65, -0.35], time {time:.2?} (< 3 min) [mllam {}]", fmt_series(&alt)),
    )
}

fn lower_bound_sanity(s: &Sweeps) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut cells = 0;
    for result in [&s.sigma, &s.tasks, &s.samples] {
        for row in result.rows.iter().filter(|r| r.method == Method::Mllam) {
            worst = worst.min(row.rescaled / row.lower_bound);
            cells += 1;
        }
    }
    check(
        worst >= 0.1,
        format!(
            "min over {cells} MLLAM cells of rescaled error / lower bound = {worst:.3} (>= 0.1)"
        ),
    )
}

fn operator_properties() -> Outcome {
    let instance = generate_instance(&InstanceSpec {
        d: 12,
        r: 3,
        t: 40,
        m: 10,
        sigma: 0.5,
        seed: 5,
    })
    .unwrap();
    let halves: Vec<TaskView<'_>> = instance
        .tasks()
        .iter()
        .map(|t| t.split_halves().1)
        .collect();
    let v = RegressorSet::new(gaussian(40, 3, 1));
    let mut worst_sym = 0.0f64;
    let mut worst_psd = 0.0f64;
    for probe in 0..1000u64 {
        let u1 = gaussian(12, 3, 10 + 2 * probe);
        let u2 = gaussian(12, 3, 11 + 2 * probe);
        let a1 = apply_a(&u1, &halves, &v).unwrap();
        let a2 = apply_a(&u2, &halves, &v).unwrap();
        let scale = u2.norm() * a1.norm() + a2.norm() * u1.norm();
        worst_sym = worst_sym.max((u2.dot(&a1) - a2.dot(&u1)).abs() / scale);
        let psd_scale = u1.norm() * a1.norm();
        worst_psd = worst_psd.max(-u1.dot(&a1) / psd_scale);
    }

    let mut worst_gap = 0.0f64;
    for k in 0..20u64 {
        let inst = generate_instance(&InstanceSpec {
            d: 12,
            r: 2,
            t: 30,
            m: 10,
            sigma: 0.3,
            seed: 100 + k,
        })
        .unwrap();
        let halves: Vec<TaskView<'_>> = inst.tasks().iter().map(|t| t.split_halves().1).collect();
        let v = RegressorSet::new(gaussian(30, 2, 500 + k));
        let cg = u_update(&halves, &v, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let dense = u_update(
            &halves,
            &v,
            &SolverConfig {
                u_solver: USolver::Dense,
                ..SolverConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max((cg.u_hat - dense.u_hat).norm());
    }
    check(
        worst_sym < 1e-8 && worst_psd <= 1e-10 && worst_gap < 1e-6,
        format!(
            "self-adjoint defect {worst_sym:.1e} (< 1e-8), PSD defect {worst_psd:.1e} (<= 1e-10), \
             CG vs dense max |diff|_F {worst_gap:.1e} (< 1e-6)"
        ),
    )
}

/// Closed-form eigenvalues of a symmetric 2x2 matrix.
fn eig2(h: &DMatrix<f64>) -> (f64, f64) {
    let (a, b, c) = (h[(0, 0)], 0.5 * (h[(0, 1)] + h[(1, 0)]), h[(1, 1)]);
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mid - rad, mid + rad)
}

fn oracle_equivalence() -> Outcome {
    let mut worst_v = 0.0f64;
    for k in 0..100u64 {
        let inst = generate_instance(&InstanceSpec {
            d: 15,
            r: 3,
            t: 1,
            m: 20,
            sigma: 0.7,
            seed: 900 + k,
        })
        .unwrap();
        let u = random_init(15, 3, k).unwrap();
        let (first, _) = inst.tasks()[0].split_halves();
        let fitted = v_update(&u, &first, 1e-10).coeffs;
        let design = first.examples * u.basis();
        let normal = (design.transpose() * &design).try_inverse().unwrap()
            * design.transpose()
            * first.observations;
        worst_v = worst_v.max((fitted - normal).amax());
    }

    let inst = generate_instance(&InstanceSpec {
        d: 10,
        r: 2,
        t: 50,
        m: 8,
        sigma: 0.5,
        seed: 31,
    })
    .unwrap();
    let u = random_init(10, 2, 8).unwrap();
    let firsts: Vec<TaskView<'_>> = inst.tasks().iter().map(|t| t.split_halves().0).collect();
    let cfg = SolverConfig::mllams();
    let chosen = select_tasks(&u, &firsts, 0..50, &cfg);
    let brute: Vec<usize> = inst
        .tasks()
        .iter()
        .enumerate()
        .filter_map(|(i, task)| {
            let half = task.num_samples() / 2;
            let mut s = DMatrix::zeros(10, 10);
            for j in 0..half {
                let x = task.examples().row(j).transpose();
                s += &x * x.transpose();
            }
            s *= 2.0 / task.num_samples() as f64;
            let (lo, hi) = eig2(&(u.basis().transpose() * s * u.basis()));
            (lo >= 0.5 && hi <= 10.0).then_some(i)
        })
        .collect();

    let u_star = random_init(30, 4, 77).unwrap();
    let d_diag = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 1.5, 0.8]));
    let population = DMatrix::<f64>::identity(30, 30) * 2.3
        + u_star.basis() * d_diag * u_star.basis().transpose();
    let mom_err = subspace_error(&top_eigenspace(&population, 4).unwrap(), &u_star)
        .unwrap()
        .frob;

    check(
        worst_v < 1e-8 && chosen == brute && mom_err < 1e-10,
        format!(
            "v_update vs normal equations {worst_v:.1e} (< 1e-8); selection {} of 50 tasks, brute force agrees: {}; \
             MoM population span error {mom_err:.1e} (< 1e-10)",
            chosen.len(),
            chosen == brute
        ),
    )
}

fn metric_identities() -> Outcome {
    let mut worst_identity = 0.0f64;
    let mut worst_rotation = 0.0f64;
    let mut in_range = true;
    for k in 0..100u64 {
        let (d, r) = (8 + (k as usize % 5), 1 + (k as usize % 4));
        let u = random_init(d, r, 2 * k).unwrap();
        let u_star = random_init(d, r, 2 * k + 1).unwrap();
        let e = subspace_error(&u, &u_star).unwrap();
        let overlap = u_star.basis().transpose() * u.basis();
        worst_identity =
            worst_identity.max((e.frob * e.frob - (r as f64 - overlap.norm_squared())).abs());
        let rot = random_init(r, r, 1000 + k).unwrap();
        let rotated = Subspace::new(u.basis() * rot.basis()).unwrap();
        let rotated_star = Subspace::new(u_star.basis() * rot.basis().transpose()).unwrap();
        let er = subspace_error(&rotated, &rotated_star).unwrap();
        worst_rotation = worst_rotation
            .max((er.frob - e.frob).abs())
            .max((er.spectral - e.spectral).abs());
        let root_r = (r as f64).sqrt();
        in_range &=
            (0.0..=root_r + 1e-12).contains(&e.frob) && (0.0..=1.0 + 1e-12).contains(&e.spectral);
    }
    check(
        worst_identity < 1e-10 && worst_rotation < 1e-10 && in_range,
        format!("frob^2 identity {worst_identity:.1e} (< 1e-10), rotation invariance {worst_rotation:.1e}, ranges ok: {in_range}"),
    )
}

fn determinism() -> Outcome {
    let spec = |workers| SweepSpec {
        varying: Varying::T,
        grid: vec![20.0, 40.0, 80.0],
        fixed: FixedParams {
            d: 15,
            r: 2,
            t: 40,
            m: 12,
            sigma: 0.5,
            k: 8,
            repeats: 3,
            seed: 4242,
        },
        methods: Method::ALL.to_vec(),
        schedule: TaskSchedule::ReuseAll,
        workers: Some(workers),
        record_wall_time: false,
    };
    let a = to_csv_string(&run_sweep(&spec(1)).unwrap());
    let b = to_csv_string(&run_sweep(&spec(4)).unwrap());
    let c = to_csv_string(&run_sweep(&spec(4)).unwrap());
    check(
        a == b && b == c,
        format!(
            "{} CSV bytes; 1 vs 4 workers identical: {}, rerun identical: {}",
            a.len(),
            a == b,
            b == c
        ),
    )
}

fn adaptation() -> Outcome {
    let instance = criterion1_instance();
    let u_star = &instance.ground_truth().unwrap().u_star;
    let init = mom_init(&instance).map_err(|e| e.to_string())?;
    let learned = fit(&instance, &init, &SolverConfig::mllam().with_iterations(25))
        .map_err(|e| e.to_string())?
        .final_u;
    let r = 2;
    let mut means = Vec::new();
    for m_plus in [r, 2 * r, 4 * r, 8 * r] {
        let total: f64 = (0..200u64)
            .map(|i| {
                let task = sample_new_task(u_star, m_plus, 0.1, 31_337 + m_plus as u64, i);
                let reg =
                    adapt_samples(&learned, &task.examples, &task.observations, 1e-10).unwrap();
                regressor_mse(&learned, &reg.coeffs, u_star, &task.v_star).unwrap()
            })
            .sum();
        means.push(total / 200.0);
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let ratio = means[3] / means[0];
    check(
        decreasing && ratio < 0.25,
        format!(
            "mean MSE for m+ = 2, 4, 8, 16: {}; strictly decreasing: {decreasing}; final/initial {ratio:.3e} (< 0.25)",
            means.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| match &outcome {
        Ok(detail) => println!("[PASS] criterion {id:>2} ({name}): {detail}"),
        Err(detail) => {
            failures += 1;
            println!("[FAIL] criterion {id:>2} ({name}): {detail}");
        }
    };

    report(1, "noiseless exact recovery", noiseless_recovery());
    let sweeps = run_sweeps();
    report(2, "sigma proportionality", sigma_proportionality(&sweeps));
    report(
        3,
        "t-scaling",
        scaling(&sweeps.tasks, sweeps.times[1], "t in {100, 400, 1600}"),
    );
    report(
        4,
        "m-scaling",
        scaling(&sweeps.samples, sweeps.times[2], "m in {40, 160, 640}"),
    );
    report(5, "lower-bound sanity", lower_bound_sanity(&sweeps));
    report(6, "operator properties", operator_properties());
    report(7, "oracle equivalence", oracle_equivalence());
    report(8, "metric identities", metric_identities());
    report(9, "determinism", determinism());
    report(10, "adaptation", adaptation());

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
