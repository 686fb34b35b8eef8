use mllam_core::adapt::{adapt, adapt_samples, predict, sample_new_task};
use mllam_core::harness::loglog_slope;
use mllam_core::init::{mom_init, moment_matrix, random_init};
use mllam_core::metrics::{projection_residual, regressor_mse, subspace_error};
use mllam_core::model::{
    generate_instance, random_basis, InstanceSpec, ProblemInstance, Subspace, TaskData,
};
use mllam_core::rng::Stream;
use mllam_core::solvers::{fit, SolverConfig};
use mllam_core::Error;
use nalgebra::{DMatrix, DVector};

#[test]
fn random_init_error_concentrates_near_sqrt_r() {
    let (d, r) = (100, 5);
    let bound = (r as f64).sqrt();
    for seed in 0..100u64 {
        let u = random_init(d, r, seed).unwrap();
        let u_star = random_basis(d, r, seed + 1000, Stream::SubspaceBasis, 0).unwrap();
        let frob = subspace_error(&u, &u_star).unwrap().frob;
        assert!(
            frob >= 0.9 * bound && frob <= bound + 1e-12,
            "seed {seed}: {frob}"
        );
    }
}

#[test]
fn moment_matrix_ignores_task_order() {
    let inst = generate_instance(&InstanceSpec {
        d: 10,
        r: 2,
        t: 12,
        m: 8,
        sigma: 0.3,
        seed: 1,
    })
    .unwrap();
    let mut tasks: Vec<TaskData> = inst.tasks().to_vec();
    tasks.reverse();
    let shuffled = ProblemInstance::new(tasks, 10, 2, 0.3, None).unwrap();
    assert!((moment_matrix(&inst) - moment_matrix(&shuffled)).amax() < 1e-12);
    let a = mom_init(&inst).unwrap();
    let b = mom_init(&shuffled).unwrap();
    assert!(subspace_error(&a, &b).unwrap().frob < 1e-10);
}

#[test]
fn mom_keeps_a_bias_floor_without_noise() {
    let inst = generate_instance(&InstanceSpec {
        d: 100,
        r: 5,
        t: 200,
        m: 25,
        sigma: 1e-4,
        seed: 2,
    })
    .unwrap();
    let u_star = &inst.ground_truth().unwrap().u_star;
    let mom = subspace_error(&mom_init(&inst).unwrap(), u_star)
        .unwrap()
        .frob;
    assert!(mom > 0.1, "{mom}");
    let report = fit(&inst, &mom_init(&inst).unwrap(), &SolverConfig::mllam()).unwrap();
    let refined = report.final_error().unwrap().frob;
    assert!(refined < mom, "{refined} >= {mom}");
}

#[test]
fn mom_rejects_too_few_samples() {
    let inst = generate_instance(&InstanceSpec {
        d: 10,
        r: 5,
        t: 2,
        m: 2,
        sigma: 0.1,
        seed: 3,
    })
    .unwrap();
    assert!(matches!(
        mom_init(&inst),
        Err(Error::InsufficientSamples(_))
    ));
}

#[test]
fn adaptation_is_exact_in_the_true_subspace() {
    let u_star = random_basis(20, 3, 4, Stream::SubspaceBasis, 0).unwrap();
    for index in 0..10 {
        let task = sample_new_task(&u_star, 3, 0.0, 4, index);
        let fit = adapt_samples(&u_star, &task.examples, &task.observations, 1e-10).unwrap();
        assert!(regressor_mse(&u_star, &fit.coeffs, &u_star, &task.v_star).unwrap() < 1e-18);
        let x = DVector::from_element(20, 0.5);
        let truth = x.dot(&(u_star.basis() * &task.v_star));
        assert!((predict(&fit, &x).unwrap() - truth).abs() < 1e-9);
    }
}

#[test]
fn adaptation_error_scales_with_subspace_error_squared() {
    let (d, r) = (30, 3);
    let u_star = random_basis(d, r, 5, Stream::SubspaceBasis, 0).unwrap();
    let raw = random_basis(d, r, 6, Stream::SubspaceBasis, 1).unwrap();
    let orth = projection_residual(raw.basis(), u_star.basis());
    let mut series = Vec::new();
    for delta in [1e-3, 1e-2, 1e-1] {
        let u = Subspace::orthonormalize(&(u_star.basis() + &orth * delta)).unwrap();
        let err = subspace_error(&u, &u_star).unwrap().frob;
        let mse: f64 = (0..20)
            .map(|index| {
                let task = sample_new_task(&u_star, 200, 0.0, 7, index);
                let fit = adapt_samples(&u, &task.examples, &task.observations, 1e-10).unwrap();
                regressor_mse(&u, &fit.coeffs, &u_star, &task.v_star).unwrap()
            })
            .sum::<f64>()
            / 20.0;
        series.push((err, mse));
    }
    let slope = loglog_slope(&series);
    assert!((1.8..=2.2).contains(&slope), "{slope} from {series:?}");
}

#[test]
fn adapt_accepts_stored_tasks() {
    let inst = generate_instance(&InstanceSpec {
        d: 8,
        r: 2,
        t: 3,
        m: 30,
        sigma: 0.0,
        seed: 8,
    })
    .unwrap();
    let gt = inst.ground_truth().unwrap();
    let fit = adapt(&gt.u_star, &inst.tasks()[1], 1e-10).unwrap();
    assert_eq!(fit.n_samples_used, 30);
    assert!((fit.coeffs - gt.v_star.row(1)).amax() < 1e-10);
}

#[test]
fn adapt_with_one_sample_and_none() {
    let u = random_init(6, 2, 9).unwrap();
    let x = DMatrix::from_element(1, 6, 1.0);
    let fit = adapt_samples(&u, &x, &DVector::from_element(1, 2.0), 1e-10).unwrap();
    assert_eq!(fit.n_samples_used, 1);
    assert!((predict(&fit, &DVector::from_element(6, 1.0)).unwrap() - 2.0).abs() < 1e-10);
    assert!(adapt_samples(&u, &DMatrix::zeros(0, 6), &DVector::zeros(0), 1e-10).is_err());
}
