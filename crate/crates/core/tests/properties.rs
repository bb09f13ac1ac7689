use inertial_core::convex::{conj_separable, fenchel_young_gap, prox_separable, SeparablePotential};
use inertial_core::models::{build_linear_wave, build_p2, build_p3, weighted_laplacian, P2Params, P3Params};
use inertial_core::{run, BoundaryCondition, Field, SpatialGrid};
use proptest::prelude::*;

fn potential() -> impl Strategy<Value = SeparablePotential> {
    (0.0..2.0f64, 0.1..3.0f64, 1.2..4.0f64, 0.0..1.0f64)
        .prop_map(|(a, g, q, nu)| SeparablePotential::new(a, g, q).unwrap().with_viscosity(nu))
}

fn smooth_slope(p: &SeparablePotential, s: f64) -> f64 {
    let x = s.abs();
    (p.a + p.g * x.powf(p.q - 1.0) + p.nu * x).copysign(s)
}

proptest! {
    #[test]
    fn prox_satisfies_its_inclusion(pot in potential(), gamma in 0.01..10.0f64, s in -10.0..10.0f64) {
        let x = prox_separable(&pot, gamma, s).unwrap();
        let xi = (s - x) / gamma;
        prop_assert!(pot.subgradient_distance(x, xi) <= 1e-8 * (1.0 + xi.abs()));
        prop_assert!(x.abs() <= s.abs());
    }

    #[test]
    fn fenchel_young_is_nonnegative(pot in potential(), s in -5.0..5.0f64, xi in -5.0..5.0f64) {
        let gap = fenchel_young_gap(pot.value(s), conj_separable(&pot, xi), xi * s);
        prop_assert!(gap >= -1e-10);
    }

    #[test]
    fn fenchel_young_is_tight_on_the_graph(pot in potential(), s in -3.0..3.0f64) {
        prop_assume!(s.abs() > 1e-6);
        let xi = smooth_slope(&pot, s);
        let gap = fenchel_young_gap(pot.value(s), conj_separable(&pot, xi), xi * s);
        prop_assert!(gap.abs() <= 1e-8 * (1.0 + pot.value(s)));
    }

    #[test]
    fn weighted_laplacian_is_symmetric(c in proptest::collection::vec(0.1..5.0f64, 16)) {
        let g = SpatialGrid::uniform(17, 1.0, BoundaryCondition::Dirichlet0).unwrap();
        let k = weighted_laplacian(&g, &c);
        prop_assert!(k.antisymmetry() <= 1e-12 * k.max_abs());
        prop_assert!(k.min_eigenvalue() > 0.0);
    }

    #[test]
    fn p3_energy_is_lambda_convex(
        u in proptest::collection::vec(-2.0..2.0f64, 15),
        v in proptest::collection::vec(-2.0..2.0f64, 15),
        theta in 0.0..1.0f64,
    ) {
        let spec = build_p3(&P3Params { n_nodes: 17, ..P3Params::default() }).unwrap();
        let g = &spec.grid;
        let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let e = |x: &[f64]| spec.energy.value(g, 0.0, x);
        let d = Field(u.clone()).sub(&v);
        let bound = theta * e(&u) + (1.0 - theta) * e(&v)
            + theta * (1.0 - theta) * spec.energy.lambda_conv * g.inner(&d, &d);
        prop_assert!(e(&mid) <= bound + 1e-10 * (1.0 + bound.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_keep_small_gaps_and_exact_velocities(nu in 0.0..2.0f64, amp in 0.1..1.0f64, steps in 4usize..20) {
        let g = SpatialGrid::uniform(33, 1.0, BoundaryCondition::Dirichlet0).unwrap();
        let (lw, _) = build_linear_wave(nu, &g, 1.0).unwrap();
        let p2 = build_p2(&P2Params { amp, n_nodes: 33, ..P2Params::default() }).unwrap();
        let tau = 1.0 / steps as f64;
        for spec in [&lw, &p2] {
            let traj = run(spec, tau).unwrap();
            for r in &traj.reports {
                prop_assert!(r.fy_gap >= -1e-10);
                prop_assert!(r.fy_gap <= 1e-8);
                prop_assert!(r.phi_value <= r.phi_stay + 1e-12 * (1.0 + r.phi_stay.abs()));
            }
            for n in 1..=traj.steps() {
                let rebuilt: Vec<f64> = traj.u[n].iter().zip(traj.u[n - 1].iter()).map(|(a, b)| (a - b) / tau).collect();
                prop_assert_eq!(&traj.v[n].0, &rebuilt);
            }
        }
    }
}
