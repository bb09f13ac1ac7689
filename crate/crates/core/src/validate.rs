//! Sampled checks of the standing assumptions on a concrete problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};
use crate::problem::ProblemSpec;

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest violation seen (0 when every sample satisfied the condition).
    pub worst_violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    /// Smallest eigenvalue of the quadratic energy operator.
    pub mu: f64,
    /// `1 / (2 lambda)`, infinite for convex energies.
    pub tau_max: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    /// A few low sine modes plus nodal noise, scaled to `radius`.
    fn field(&mut self, grid: &SpatialGrid, radius: f64) -> Field {
        let coeffs: Vec<f64> = (0..4).map(|_| self.rng.random_range(-1.0..1.0)).collect();
        let l = grid.length();
        let mut u = grid.from_fn(|x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * x / l).sin())
                .sum::<f64>()
                * 0.5
        });
        for x in u.iter_mut() {
            *x = radius * (*x + 0.1 * self.rng.random_range(-1.0..1.0));
        }
        u
    }

    fn unit(&mut self) -> f64 {
        self.rng.random_range(0.0..1.0)
    }
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::eval(what.to_string()))
    }
}

pub fn validate_assumptions(spec: &ProblemSpec, samples: usize) -> Result<ValidationReport> {
    validate_assumptions_seeded(spec, samples, DEFAULT_SEED)
}

pub fn validate_assumptions_seeded(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<ValidationReport> {
    spec.check()?;
    if samples == 0 {
        return Err(Error::config("at least one sample is required"));
    }
    let grid = &spec.grid;
    let n = grid.interior();
    let a = &spec.energy.quad_op;
    let mut s = Sampler { rng: ChaCha8Rng::seed_from_u64(seed) };
    let radius = spec.dissipation.growth.radius;
    let horizon = spec.horizon;
    let mut checks = Vec::new();

    let scale = a.max_abs().max(1.0);
    let skew = a.antisymmetry();
    finite(skew, "energy operator")?;
    checks.push(CheckResult { name: "symmetry", passed: skew <= 1e-12 * scale, worst_violation: skew });

    let mu = finite(a.min_eigenvalue(), "energy operator spectrum")?;
    checks.push(CheckResult { name: "positivity", passed: mu > 0.0, worst_violation: (-mu).max(0.0) });

    let lambda = spec.energy.lambda_conv;
    let mut worst_lc: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    let mut worst_time: f64 = 0.0;
    for _ in 0..samples {
        let t = horizon * s.unit();
        let u = s.field(grid, radius);
        let v = s.field(grid, radius);
        let theta = s.unit();
        let mid: Vec<f64> = u.iter().zip(v.iter()).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let eu = finite(spec.energy.value(grid, t, &u), "energy")?;
        let ev = finite(spec.energy.value(grid, t, &v), "energy")?;
        let em = finite(spec.energy.value(grid, t, &mid), "energy")?;
        let d = u.sub(&v);
        let bound = theta * eu + (1.0 - theta) * ev + theta * (1.0 - theta) * lambda * grid.inner(&d, &d);
        let tol = 1e-10 * (1.0 + eu.abs() + ev.abs());
        worst_lc = worst_lc.max((em - bound - tol).max(0.0));

        if let Some(e2) = &spec.energy.smooth_part {
            let dir = s.field(grid, 1.0);
            let mut g = vec![0.0; n];
            e2.gradient(t, &u, &mut g);
            let analytic = grid.inner(&g, &dir);
            let eps = 1e-6 * (1.0 + u.max_abs());
            let fd = (e2.value(t, &u.axpy(eps, &dir)) - e2.value(t, &u.axpy(-eps, &dir))) / (2.0 * eps);
            let rel = (fd - analytic).abs() / (fd.abs() + analytic.abs()).max(1e-8 * (1.0 + e2.value(t, &u).abs()));
            worst_grad = worst_grad.max(finite(rel, "energy gradient")?);

            if e2.is_time_dependent() {
                let tc = spec.energy.time_control;
                let dt = finite(e2.time_derivative(t, &u), "energy time derivative")?;
                let bound = tc.c1 * (e2.value(t, &u) + tc.shift);
                worst_time = worst_time.max((dt.abs() - bound).max(0.0));
            }
        }
    }
    checks.push(CheckResult { name: "lambda_convexity", passed: worst_lc == 0.0, worst_violation: worst_lc });
    checks.push(CheckResult { name: "gradient_consistency", passed: worst_grad <= 1e-6, worst_violation: worst_grad });
    checks.push(CheckResult { name: "time_derivative_control", passed: worst_time == 0.0, worst_violation: worst_time });

    let diss = &spec.dissipation;
    let zero = grid.zeros();
    let growth = diss.growth;
    let mut worst_zero: f64 = 0.0;
    let mut worst_nonneg: f64 = 0.0;
    let mut worst_growth: f64 = 0.0;
    let mut worst_convex: f64 = 0.0;
    for k in 0..samples {
        let state = s.field(grid, radius);
        let psi0 = finite(diss.value(grid, &state, &zero), "dissipation")?;
        worst_zero = worst_zero.max(psi0.abs());
        // velocities from 1e-2 to 1e2
        let mag = 10f64.powf(-2.0 + 4.0 * (k % 5) as f64 / 4.0);
        let v = s.field(grid, mag);
        let w = s.field(grid, mag);
        let psi = finite(diss.value(grid, &state, &v), "dissipation")?;
        worst_nonneg = worst_nonneg.max(-psi);
        let nq = diss.strain_norm(grid, &v).powf(diss.q);
        let lo = growth.lower * (nq - 1.0);
        let hi = growth.upper * (nq + 1.0);
        let rel = 1e-12 * (1.0 + psi.abs());
        worst_growth = worst_growth.max((lo - psi - rel).max(0.0)).max((psi - hi - rel).max(0.0));
        let theta = s.unit();
        let mid: Vec<f64> = v.iter().zip(w.iter()).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let pw = diss.value(grid, &state, &w);
        let pm = diss.value(grid, &state, &mid);
        let gap = pm - theta * psi - (1.0 - theta) * pw - 1e-12 * (1.0 + psi.abs() + pw.abs());
        worst_convex = worst_convex.max(gap.max(0.0));
    }
    checks.push(CheckResult { name: "psi_zero", passed: worst_zero == 0.0, worst_violation: worst_zero });
    checks.push(CheckResult { name: "psi_nonnegative", passed: worst_nonneg <= 0.0, worst_violation: worst_nonneg.max(0.0) });
    checks.push(CheckResult { name: "psi_convexity", passed: worst_convex == 0.0, worst_violation: worst_convex });
    checks.push(CheckResult { name: "growth", passed: worst_growth == 0.0, worst_violation: worst_growth });

    let mut worst_cont: f64 = 0.0;
    if !spec.perturbation.is_zero() {
        let delta = 1e-9;
        for _ in 0..samples {
            let t = horizon * s.unit();
            let u = s.field(grid, radius);
            let v = s.field(grid, radius);
            let du = s.field(grid, 1.0);
            let dv = s.field(grid, 1.0);
            let b0 = spec.perturbation.evaluate(t, &u, &v);
            let b1 = spec.perturbation.evaluate(t, &u.axpy(delta, &du), &v.axpy(delta, &dv));
            if !b0.is_finite() || !b1.is_finite() {
                return Err(Error::eval("perturbation"));
            }
            let change = grid.norm(&b1.sub(&b0));
            let allowed = 1e-3 * (1.0 + grid.norm(&b0));
            worst_cont = worst_cont.max((change - allowed).max(0.0));
        }
    }
    checks.push(CheckResult {
        name: "perturbation_continuity",
        passed: worst_cont == 0.0,
        worst_violation: worst_cont,
    });

    let tau_max = if lambda > 0.0 { 1.0 / (2.0 * lambda) } else { f64::INFINITY };
    Ok(ValidationReport { checks, mu, tau_max })
}
