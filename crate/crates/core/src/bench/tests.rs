use super::*;
use crate::mpc::Trajectory;
use nalgebra::{dmatrix, dvector};

#[test]
fn random_qp_shape() {
    let gen = gen_random_dense_qp_with_witness(100, 1).unwrap();
    let p = &gen.problem;
    assert_eq!(p.n(), 100);
    assert_eq!(p.m(), 50);
    let kinds = p.constraint_kinds();
    assert!(kinds[..25]
        .iter()
        .all(|k| *k == crate::ConstraintKind::Equality));
    assert!(kinds[25..]
        .iter()
        .all(|k| *k == crate::ConstraintKind::Inequality));
    assert!(p.is_feasible(&gen.witness, 0.0));
    for i in 25..50 {
        assert!(p.upper()[i] - p.lower()[i] >= 0.2);
    }
}

#[test]
fn random_qp_is_deterministic() {
    let a = gen_random_dense_qp(20, 7).unwrap();
    let b = gen_random_dense_qp(20, 7).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, gen_random_dense_qp(20, 8).unwrap());
    assert!(matches!(
        gen_random_dense_qp(3, 0),
        Err(BenchError::InvalidSize(_))
    ));
}

#[test]
fn random_systems() {
    let sys = gen_random_linear_system(10, 3, true).unwrap();
    assert_eq!(sys.nx(), 30);
    assert_eq!(sys.nu(), 10);
    assert!(sys.is_controllable());
    let r = spectral_radius(sys.a());
    assert!((UNSTABLE_RADIUS.0 - 1e-9..=UNSTABLE_RADIUS.1 + 1e-9).contains(&r));

    let sys = gen_random_linear_system(2, 3, false).unwrap();
    let r = spectral_radius(sys.a());
    assert!((STABLE_RADIUS.0 - 1e-9..=STABLE_RADIUS.1 + 1e-9).contains(&r));
    assert_eq!(sys, gen_random_linear_system(2, 3, false).unwrap());
    assert!(gen_random_linear_system(0, 3, false).is_err());
}

fn double_integrator_controller(u_max: f64) -> MpcController {
    let sys = LinearSystem::new(dmatrix![1.0, 0.1; 0.0, 1.0], dmatrix![0.005; 0.1]).unwrap();
    let weights =
        MpcWeights::with_lqr_terminal(&sys, DMatrix::identity(2, 2), dmatrix![1.0], 40).unwrap();
    let limits = BoxLimits::symmetric(1, u_max).unwrap();
    MpcController::new(sys, &weights, limits, SolverSettings::default()).unwrap()
}

#[test]
fn origin_is_an_equilibrium() {
    let ctrl = double_integrator_controller(0.5);
    let opts = ClosedLoopOptions::new(20, StepPolicy::Iterations(1));
    let res = simulate_closed_loop(&ctrl, &dvector![0.0, 0.0], &opts).unwrap();
    assert!(res.states.iter().all(|x| x.iter().all(|v| *v == 0.0)));
    assert!(res.controls.iter().all(|u| u[0] == 0.0));
    assert_eq!(res.steps_to_stabilize, Some(0));
    assert_eq!(res.activity_fraction, 0.0);
}

#[test]
fn double_integrator_stabilizes_with_one_iteration() {
    let ctrl = double_integrator_controller(0.5);
    let x0 = dvector![1.0, 0.0];
    let oracle = simulate_closed_loop(
        &ctrl,
        &x0,
        &ClosedLoopOptions::new(300, StepPolicy::ToTolerance),
    )
    .unwrap();
    assert!(oracle.steps_to_stabilize.is_some());
    let res = simulate_closed_loop(
        &ctrl,
        &x0,
        &ClosedLoopOptions::new(300, StepPolicy::Iterations(1)),
    )
    .unwrap();
    let t = res.steps_to_stabilize.expect("stabilizes within 300 steps");
    assert!(t <= 300 && !res.diverged);
    assert!(res.activity_fraction > 0.0);
    assert!(res.controls.iter().all(|u| u[0].abs() <= 0.5));
    let traj = Trajectory {
        states: res.states[1..].to_vec(),
        controls: res.controls.clone(),
    };
    assert!(ctrl.system().dynamics_defect(&x0, &traj) < 1e-12);
}

#[test]
fn activity_scaling_reaches_target() {
    let ctrl = double_integrator_controller(0.5);
    let k = ctrl.template().gain();
    let dir = dvector![1.0, 0.0];
    let s = scale_for_activity(ctrl.system(), k, ctrl.limits(), &dir, 0.3, 50);
    assert!(lqr_activity(ctrl.system(), k, ctrl.limits(), &(&dir * s), 50) >= 0.3);
    if s > 1.0 {
        assert!(lqr_activity(ctrl.system(), k, ctrl.limits(), &(&dir * (s / 1.25)), 50) < 0.3);
    }
}

fn small_qp_config() -> BenchConfig {
    BenchConfig {
        sizes: vec![8, 12],
        seeds: vec![0, 1, 2],
        ..BenchConfig::random_qp(false)
    }
}

fn without_wall_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|line| {
            let mut f: Vec<&str> = line.split(',').collect();
            f[7] = "";
            f.join(",")
        })
        .collect()
}

#[test]
fn qp_suite_records_and_csv() {
    let records = run_suite(&small_qp_config()).unwrap();
    assert_eq!(records.len(), 6);
    assert!(records
        .iter()
        .all(|r| r.converged && r.r_prim <= 1e-6 && r.r_dual <= 1e-6));
    assert_eq!(
        records
            .iter()
            .map(|r| (r.n_or_nu, r.seed))
            .collect::<Vec<_>>(),
        vec![(8, 0), (8, 1), (8, 2), (12, 0), (12, 1), (12, 2)]
    );
    let csv = csv_string(&records);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "suite,n_or_nu,seed,iterations,r_prim,r_dual,converged,wall_ms,steps_to_stabilize,activity_fraction"
    );
    assert!(lines.next().unwrap().starts_with("random-qp,8,0,"));
    assert_eq!(csv.lines().count(), 7);

    let again = csv_string(&run_suite(&small_qp_config()).unwrap());
    assert_eq!(without_wall_time(&csv), without_wall_time(&again));
}

#[test]
fn mpc_suite_record() {
    let config = BenchConfig {
        sizes: vec![2],
        seeds: vec![5],
        mpc: MpcBenchSettings {
            horizon: 10,
            steps: 200,
            ..MpcBenchSettings::default()
        },
        ..BenchConfig::random_mpc(false)
    };
    let records = run_suite(&config).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!(r.suite, Suite::RandomMpc);
    assert!(r.activity_fraction.is_some());
    let csv = csv_string(&records);
    assert!(csv.lines().nth(1).unwrap().starts_with("random-mpc,2,5,"));
}

#[test]
fn csv_goes_to_the_output_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let config = BenchConfig {
        output: Some(path.clone()),
        ..small_qp_config()
    };
    run_suite(&config).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 7);

    let bad = BenchConfig {
        output: Some(dir.path().join("missing").join("out.csv")),
        ..small_qp_config()
    };
    assert!(matches!(run_suite(&bad), Err(BenchError::Output { .. })));
}

#[test]
fn empty_csv_has_header() {
    assert_eq!(csv_string(&[]).lines().count(), 1);
}

#[test]
fn config_validation() {
    let bad = BenchConfig {
        sizes: vec![2],
        ..BenchConfig::random_qp(false)
    };
    assert!(matches!(bad.validate(), Err(BenchError::InvalidSize(_))));
    let bad = BenchConfig {
        seeds: vec![],
        ..BenchConfig::random_mpc(false)
    };
    assert!(bad.validate().is_err());
}
