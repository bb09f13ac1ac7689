use std::f64::consts::PI;
use std::sync::Arc;

use inertial_core::models::{
    build_linear_wave, build_linear_wave_gradient, build_p1, build_p2, build_p3, clamped_bilaplacian, first_mode,
    phase_indicator, phase_indicator_slope, weighted_laplacian, P1Params, P2Params, P3Params,
};
use inertial_core::{run, validate_assumptions, BoundaryCondition, SpatialGrid};

fn grid65() -> SpatialGrid {
    SpatialGrid::uniform(65, 1.0, BoundaryCondition::Dirichlet0).unwrap()
}

#[test]
fn p2_reduces_to_gradient_damped_wave() {
    let params = P2Params { g1: Arc::new(|_| 1.0), g2: Arc::new(|_| 0.0), g1_bounds: (1.0, 1.0), g2_max: 0.0, b_scale: 0.0, amp: 1.0, ..P2Params::default() };
    let p2 = build_p2(&params).unwrap();
    let (lw, _) = build_linear_wave_gradient(1.0, &grid65(), 1.0).unwrap();
    for tau in [0.1, 0.025] {
        let a = run(&p2, tau).unwrap();
        let b = run(&lw, tau).unwrap();
        let worst = a.u.iter().zip(&b.u).map(|(x, y)| x.sub(y).max_abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-10, "tau {tau}: {worst:e}");
    }
}

#[test]
fn p1_without_phase_indicator_has_quadratic_gap() {
    let p = P1Params { alpha: 0.0, ..P1Params::default() };
    let spec = build_p1(&p).unwrap();
    let traj = run(&spec, 0.05).unwrap();
    let g = &spec.grid;
    let nu = p.nu / p.rho;
    for n in 1..=traj.steps() {
        let dual = traj.duals[n].as_ref().expect("composite steps store their dual");
        let s = g.grad_field(&traj.v[n]);
        let quad = g.h() * s.iter().zip(dual.iter()).map(|(s, p)| (nu * s - p).powi(2) / (2.0 * nu)).sum::<f64>();
        let gap = traj.reports[n - 1].fy_gap;
        assert!((gap - quad).abs() <= 1e-12 * (1.0 + quad), "step {n}: {gap:e} vs {quad:e}");
        assert!(gap <= 1e-8);
    }
}

#[test]
fn p1_friction_matches_phase_indicator_variation() {
    let p = P1Params::default();
    let spec = build_p1(&p).unwrap();
    let g = &spec.grid;
    let mut diffs = Vec::new();
    for n in [28usize, 56, 112] {
        let tau = 1.0 / n as f64;
        let traj = run(&spec, tau).unwrap();
        let (mut acc, mut var) = (0.0, 0.0);
        for k in 1..=traj.steps() {
            let e0 = g.grad_field(&traj.u[k - 1]);
            let e1 = g.grad_field(&traj.u[k]);
            let dv = g.grad_field(&traj.v[k]);
            for i in 0..e0.len() {
                acc += tau * g.h() * (phase_indicator_slope(p.alpha, e0[i]) * dv[i]).abs();
                var += g.h() * (phase_indicator(p.alpha, e1[i]) - phase_indicator(p.alpha, e0[i])).abs();
            }
        }
        assert!(var > 0.0);
        diffs.push((acc - var).abs());
    }
    for w in diffs.windows(2) {
        assert!(w[0] / w[1] >= 1.6, "{diffs:?}");
    }
}

#[test]
fn p2_zero_data_stay_zero() {
    let params = P2Params { amp: 0.0, ..P2Params::default() };
    let spec = build_p2(&params).unwrap();
    let traj = run(&spec, 0.1).unwrap();
    assert!(traj.u.iter().all(|u| u.iter().all(|&x| x == 0.0)));
}

#[test]
fn p3_kick_loses_kinetic_energy() {
    let g = grid65();
    let spec = build_p3(&P3Params { v0: Some(g.from_fn(|x| 3.0 * (PI * x).sin())), ..P3Params::default() }).unwrap();
    let traj = run(&spec, 1.0 / 64.0).unwrap();
    let kinetic: Vec<f64> = traj.v.iter().map(|v| 0.5 * g.inner(v, v)).collect();
    assert!(kinetic.last().unwrap() < &(0.5 * kinetic[0]));
}

#[test]
fn undamped_mode_is_periodic() {
    let g = grid65();
    let (spec, exact) = build_linear_wave(0.0, &g, 1.0).unwrap();
    let (_, w2) = first_mode(&g);
    let period = 2.0 * PI / w2.sqrt();
    let back = exact(period);
    assert!(back.sub(&spec.u0).max_abs() < 1e-12);
}

#[test]
fn assembled_operators_are_symmetric_positive() {
    let g = grid65();
    let c: Vec<f64> = (0..g.n_edges()).map(|e| 1.0 + 0.5 * (e as f64).sin().abs()).collect();
    let k = weighted_laplacian(&g, &c);
    assert!(k.antisymmetry() <= 1e-12 * k.max_abs());
    assert!(k.min_eigenvalue() > 0.0);
    let cg = SpatialGrid::uniform(33, 1.0, BoundaryCondition::Dirichlet0Clamped).unwrap();
    let b = clamped_bilaplacian(&cg);
    assert!(b.antisymmetry() <= 1e-12 * b.max_abs());
    assert!(b.min_eigenvalue() > 0.0);
}

#[test]
fn forced_p2_passes_validation() {
    let g = grid65();
    let shape = g.from_fn(|x| (PI * x).sin()).into_vec();
    let params = P2Params { force: Some(Arc::new(move |t| shape.iter().map(|s| s * t).collect())), ..P2Params::default() };
    let spec = build_p2(&params).unwrap();
    let rep = validate_assumptions(&spec, 100).unwrap();
    assert!(rep.passed(), "{:?}", rep.failures());
}

#[test]
fn builders_reject_bad_parameters() {
    assert!(build_p1(&P1Params { nu: 0.0, ..P1Params::default() }).is_err());
    assert!(build_p2(&P2Params { p: 2.5, ..P2Params::default() }).is_err());
    assert!(build_p3(&P3Params { q: 1.5, ..P3Params::default() }).is_err());
    assert!(build_linear_wave(-1.0, &grid65(), 1.0).is_err());
}
