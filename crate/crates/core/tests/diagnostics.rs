use inertial_core::diagnostics::{
    convergence_study, deviation_norms, edi_scan, energy_balance_residual, max_balance_residual,
};
use inertial_core::models::{build_linear_wave, build_p3, p3_stick_state, P3Params};
use inertial_core::stepper::average_force;
use inertial_core::{run, BoundaryCondition, Field, SpatialGrid};

fn damped_wave() -> inertial_core::ProblemSpec {
    let g = SpatialGrid::uniform(65, 1.0, BoundaryCondition::Dirichlet0).unwrap();
    build_linear_wave(1.0, &g, 1.0).unwrap().0
}

#[test]
fn damped_wave_edi_holds_over_thousand_steps() {
    let spec = damped_wave();
    let traj = run(&spec, 1e-3).unwrap();
    assert_eq!(traj.steps(), 1000);
    let recs = edi_scan(&spec, &traj).unwrap();
    assert!(recs.iter().all(|r| r.holds()));
    assert!(recs.iter().all(|r| r.psi_star_accum >= -1e-10));
}

#[test]
fn corrupted_eta_is_detected() {
    let spec = damped_wave();
    let mut traj = run(&spec, 1e-2).unwrap();
    let k = 37;
    let eta = traj.eta[k].as_mut().unwrap();
    for x in eta.iter_mut() {
        *x *= 1.1;
    }
    let recs = edi_scan(&spec, &traj).unwrap();
    assert!(recs[..k].iter().all(|r| r.holds()));
    assert!(!recs[k].holds());
}

#[test]
fn energy_balance_residual_shrinks_with_tau() {
    let spec = damped_wave();
    let res: Vec<f64> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&tau| max_balance_residual(&spec, &run(&spec, tau).unwrap()).unwrap())
        .collect();
    for w in res.windows(2) {
        assert!(w[0] / w[1] >= 1.3, "{res:?}");
    }
    let traj = run(&spec, 0.01).unwrap();
    assert_eq!(energy_balance_residual(&spec, &traj, 0.0).unwrap(), 0.0);
    assert!(energy_balance_residual(&spec, &traj, 0.005).is_err());
}

#[test]
fn damped_wave_cauchy_rate_is_first_order() {
    let table = convergence_study(&damped_wave(), 0.01, 3).unwrap();
    assert_eq!(table.rates.len(), 2);
    for r in &table.rates {
        assert!((r - 1.0).abs() <= 0.3, "{:?}", table.rates);
    }
    for w in table.sup_u_dev.windows(2).chain(table.sup_v_dev.windows(2)) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn zero_problem_gives_zero_table() {
    let mut spec = damped_wave();
    spec.u0 = spec.grid.zeros();
    let table = convergence_study(&spec, 0.1, 2).unwrap();
    for col in [&table.sup_u_dev, &table.sup_v_dev, &table.cauchy] {
        assert!(col.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn stick_trajectory_has_no_deviation() {
    let mut spec = build_p3(&P3Params::default()).unwrap();
    spec.u0 = p3_stick_state(&spec, 0.9).unwrap();
    let traj = run(&spec, 0.01).unwrap();
    assert_eq!(deviation_norms(&traj), (0.0, 0.0));
}

#[test]
fn single_step_deviation_is_the_increment() {
    let spec = damped_wave();
    let traj = run(&spec, 1.0).unwrap();
    let (du, _) = deviation_norms(&traj);
    assert_eq!(du, traj.increment_norm(1));
}

#[test]
fn average_force_of_sine() {
    let f = |t: f64| vec![t.sin()];
    let avg = average_force(&f, 0.0, 0.1).unwrap();
    let exact = (1.0 - 0.1f64.cos()) / 0.1;
    assert!((avg[0] - exact).abs() < 1e-14);
    let poly = |t: f64| vec![t.powi(9)];
    assert!((average_force(&poly, 0.0, 1.0).unwrap()[0] - 0.1).abs() < 1e-14);
    let bad = |_t: f64| vec![f64::NAN];
    assert!(average_force(&bad, 0.0, 1.0).is_err());
    let constant = |_t: f64| vec![2.5, -1.0];
    assert_eq!(average_force(&constant, 0.3, 0.7).unwrap(), Field(vec![2.5, -1.0]));
}
