//! Semi-implicit incremental minimization.
//!
//! Step `n` minimizes
//!
//! ```text
//! Phi(u) = |u - 2v + w|_h^2 / (2 tau^2) + tau Psi_v((u - v) / tau) + E_{t_n}(u) + <zeta, u>_h
//! ```
//!
//! with `v = U^{n-1}`, `w = U^{n-2}`, `zeta = B(t_n, U^{n-1}, V^{n-1}) - f_tau^n`, so that
//! its optimality condition is the discrete inclusion
//! `(V^n - V^{n-1}) / tau + dPsi(V^n) + DE(U^n) + B = f_tau^n`.

use crate::convex::{
    solve_pd, solve_prox_grad, ForwardDifference, PDProblem, ProxGradProblem, SmoothObjective,
    SmoothProx,
};
use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};
use crate::linalg::BandMatrix;
use crate::problem::{DissipationKind, ProblemSpec};

pub const INNER_TOL: f64 = 1e-9;

const GAUSS5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss rule on `[lo, hi]`, returned as `(nodes, weights)` with
/// weights summing to one.
pub(crate) fn gauss5(lo: f64, hi: f64) -> [(f64, f64); 5] {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut out = [(0.0, 0.0); 5];
    for k in 0..5 {
        out[k] = (mid + half * GAUSS5_NODES[k], 0.5 * GAUSS5_WEIGHTS[k]);
    }
    out
}

/// Mean of `f` over `[t_lo, t_hi]`.
pub fn average_force(f: &dyn Fn(f64) -> Vec<f64>, t_lo: f64, t_hi: f64) -> Result<Field> {
    if !(t_hi > t_lo) {
        return Err(Error::config(format!("empty averaging interval [{t_lo}, {t_hi}]")));
    }
    let mut samples = Vec::with_capacity(5);
    for (t, w) in gauss5(t_lo, t_hi) {
        let ft = f(t);
        if !ft.iter().all(|x| x.is_finite()) {
            return Err(Error::eval(format!("force at t = {t}")));
        }
        if samples.first().is_some_and(|(_, f0): &(f64, Vec<f64>)| f0.len() != ft.len()) {
            return Err(Error::eval("force changes length within a step"));
        }
        samples.push((w, ft));
    }
    let first = &samples[0].1;
    let avg = (0..first.len())
        .map(|i| {
            // constant components are returned unchanged
            if samples.iter().all(|(_, ft)| ft[i] == first[i]) {
                first[i]
            } else {
                samples.iter().map(|(w, ft)| w * ft[i]).sum()
            }
        })
        .collect();
    Ok(Field(avg))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Target Fenchel-Young gap of every inner solve.
    pub inner_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { inner_tol: INNER_TOL, max_iter: 200_000 }
    }
}

#[derive(Clone, Debug)]
pub struct StepInput {
    pub tau: f64,
    pub t_prev: f64,
    /// `U^{n-1}`
    pub v: Field,
    /// `U^{n-2}`
    pub w: Field,
    /// `B(t_n, U^{n-1}, V^{n-1}) - f_tau^n`
    pub zeta: Field,
    pub state_for_psi: Field,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// `Psi(V^n) + Psi*(eta^n) - <eta^n, V^n>_h`
    pub fy_gap: f64,
    /// Relative defect of the discrete inclusion with the stored `eta^n`.
    pub el_residual: f64,
    pub inner_iters: usize,
    pub phi_value: f64,
    /// `Phi(U^{n-1})`, the stay-put candidate.
    pub phi_stay: f64,
    pub energy_after: f64,
    pub kinetic_after: f64,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub u: Field,
    pub eta: Field,
    /// Edge dual with `D^T p = eta` (gradient-composite dissipation only).
    pub dual: Option<Field>,
    pub report: StepReport,
}

/// Smooth part `S` of `Phi`.
struct StepObjective<'a> {
    spec: &'a ProblemSpec,
    t: f64,
    inv_tau2: f64,
    center: Vec<f64>,
    zeta: &'a [f64],
}

impl<'a> StepObjective<'a> {
    fn new(spec: &'a ProblemSpec, inp: &'a StepInput) -> Self {
        let center = inp.v.iter().zip(inp.w.iter()).map(|(v, w)| 2.0 * v - w).collect();
        Self {
            spec,
            t: inp.t_prev + inp.tau,
            inv_tau2: 1.0 / (inp.tau * inp.tau),
            center,
            zeta: &inp.zeta,
        }
    }

    fn grid(&self) -> &SpatialGrid {
        &self.spec.grid
    }
}

impl SmoothObjective for StepObjective<'_> {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, u: &[f64]) -> f64 {
        let g = self.grid();
        let inertia: f64 = u.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * self.inv_tau2 * g.h() * inertia
            + self.spec.energy.value(g, self.t, u)
            + g.inner(self.zeta, u)
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        self.spec.energy.gradient(self.t, u, out);
        for i in 0..u.len() {
            out[i] += self.inv_tau2 * (u[i] - self.center[i]) + self.zeta[i];
        }
    }

    fn hessian(&self, u: &[f64]) -> BandMatrix {
        let mut h = self.spec.energy.hessian(self.t, u);
        h.add_to_diagonal(self.inv_tau2);
        h
    }

    fn strong_convexity(&self) -> f64 {
        self.inv_tau2 - 2.0 * self.spec.energy.lambda_conv
    }

    fn is_quadratic(&self) -> bool {
        self.spec.energy.smooth_part.is_none()
    }
}

fn check_step_size(spec: &ProblemSpec, tau: f64) -> Result<()> {
    let tau_max = spec.tau_max();
    if !(tau > 0.0 && tau.is_finite()) || tau > tau_max * (1.0 + 1e-12) {
        return Err(Error::StepSizeTooLarge { tau, tau_max });
    }
    Ok(())
}

fn inner_failure(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::InnerSolverFailed(Box::new(other)),
    }
}

/// One step of the scheme. `warm` defaults to `inp.v`.
pub fn incremental_minimize(
    spec: &ProblemSpec,
    inp: &StepInput,
    warm: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<StepOutcome> {
    check_step_size(spec, inp.tau)?;
    let n = spec.grid.interior();
    if [inp.v.len(), inp.w.len(), inp.zeta.len(), inp.state_for_psi.len()].iter().any(|&l| l != n) {
        return Err(Error::config("step input does not match the grid"));
    }
    let grid = &spec.grid;
    let h = grid.h();
    let tau = inp.tau;
    let obj = StepObjective::new(spec, inp);
    let init = warm.unwrap_or(&inp.v);
    let pots = spec.dissipation.potentials(&inp.state_for_psi);
    if pots.len() != spec.dissipation.n_components(grid) {
        return Err(Error::config("dissipation coefficients do not match the grid"));
    }

    let (u, dual, fy_gap, iters) = if pots.iter().all(|p| p.is_zero()) {
        let mut u = init.to_vec();
        SmoothProx::new(&obj, h).apply(f64::INFINITY, &inp.v, &mut u).map_err(inner_failure)?;
        (Field(u), None, 0.0, 1)
    } else {
        match spec.dissipation.kind {
            DissipationKind::Separable => {
                let lips = obj.inv_tau2 + spec.energy.quad_op.gershgorin_upper().max(0.0);
                let prob = ProxGradProblem {
                    smooth: &obj,
                    nonsmooth: pots,
                    offset: inp.v.to_vec(),
                    scale: tau,
                    weight: h,
                    tol: opts.inner_tol,
                    max_iter: opts.max_iter,
                    lipschitz_hint: lips,
                };
                let (u, rep) = solve_prox_grad(&prob, init).map_err(inner_failure)?;
                (u, None, rep.gap, rep.iterations)
            }
            DissipationKind::GradComposite => {
                let d = ForwardDifference::new(grid);
                let prob = PDProblem {
                    smooth: &obj,
                    lin_op: &d,
                    nonsmooth: pots,
                    offset: grid.grad_field(&inp.v).into_vec(),
                    scale: tau,
                    weight: h,
                    tol: opts.inner_tol,
                    max_iter: opts.max_iter,
                };
                let sol = solve_pd(&prob, init).map_err(inner_failure)?;
                (sol.primal, Some(sol.dual), sol.report.gap, sol.report.iterations)
            }
        }
    };
    if !u.is_finite() {
        return Err(Error::InnerSolverFailed(Box::new(Error::NonFiniteIterate { iterations: iters })));
    }

    let mut grad = vec![0.0; n];
    obj.gradient(&u, &mut grad);
    let eta = Field(grad.iter().map(|g| -g).collect());

    let t_n = inp.t_prev + tau;
    let vel: Vec<f64> = u.iter().zip(inp.v.iter()).map(|(a, b)| (a - b) / tau).collect();
    let vel_prev: Vec<f64> = inp.v.iter().zip(inp.w.iter()).map(|(a, b)| (a - b) / tau).collect();
    let mut de = vec![0.0; n];
    spec.energy.gradient(t_n, &u, &mut de);
    let mut defect = 0.0;
    let mut size = 0.0;
    for i in 0..n {
        let acc = (vel[i] - vel_prev[i]) / tau;
        let r = acc + eta[i] + de[i] + inp.zeta[i];
        defect += r * r;
        size += acc * acc + de[i] * de[i] + inp.zeta[i] * inp.zeta[i];
    }
    let el_residual = (h * defect).sqrt() / (1.0 + (h * size).sqrt());

    let psi = spec.dissipation.value(grid, &inp.state_for_psi, &vel);
    let phi_value = obj.value(&u) + tau * psi;
    let phi_stay = obj.value(&inp.v);
    let energy_after = spec.energy.value(grid, t_n, &u);
    let kinetic_after = 0.5 * grid.inner(&vel, &vel);
    Ok(StepOutcome {
        u,
        eta,
        dual,
        report: StepReport {
            fy_gap,
            el_residual,
            inner_iters: iters,
            phi_value,
            phi_stay,
            energy_after,
            kinetic_after,
        },
    })
}

/// Number of steps `N = round(T / tau)`, provided `tau` tiles the horizon.
pub fn step_count(horizon: f64, tau: f64) -> Result<usize> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config(format!("time step must be positive, got {tau}")));
    }
    let n = (horizon / tau).round();
    if n < 1.0 || (n * tau - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::config(format!("time step {tau} does not divide the horizon {horizon}")));
    }
    Ok(n as usize)
}

/// Largest step not above `cap` that tiles the horizon.
pub fn tiling_step(horizon: f64, cap: f64) -> Result<f64> {
    if !(cap > 0.0 && horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config(format!("cannot tile horizon {horizon} with steps at most {cap}")));
    }
    if cap >= horizon {
        return Ok(horizon);
    }
    let n = (horizon / cap * (1.0 - 1e-12)).ceil();
    Ok(horizon / n)
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub tau: f64,
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub v: Vec<Field>,
    /// `eta[0]` is unused; `eta[n]` belongs to step `n`.
    pub eta: Vec<Option<Field>>,
    pub duals: Vec<Option<Field>>,
    /// `reports[n - 1]` belongs to step `n`.
    pub reports: Vec<StepReport>,
    pub grid: SpatialGrid,
    pub strain_kind: DissipationKind,
    pub q: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// `||U^n - U^{n-1}||` in the strain norm of the dissipation.
    pub fn increment_norm(&self, n: usize) -> f64 {
        let d = self.u[n].sub(&self.u[n - 1]);
        match self.strain_kind {
            DissipationKind::Separable => self.grid.q_norm(&d, self.q),
            DissipationKind::GradComposite => self.grid.q_norm(&self.grid.grad_field(&d), self.q),
        }
    }

    pub fn interpolants(&self) -> Result<InterpolantSet<'_>> {
        if self.times.is_empty() {
            return Err(Error::IncompleteTrajectory("no records".into()));
        }
        Ok(InterpolantSet { traj: self })
    }
}

pub fn run(spec: &ProblemSpec, tau: f64) -> Result<Trajectory> {
    run_with(spec, tau, &SolverOptions::default())
}

pub fn run_with(spec: &ProblemSpec, tau: f64, opts: &SolverOptions) -> Result<Trajectory> {
    spec.check()?;
    check_step_size(spec, tau)?;
    let steps = step_count(spec.horizon, tau)?;
    let mut traj = Trajectory {
        tau,
        times: vec![0.0],
        u: vec![spec.u0.clone()],
        v: vec![spec.v0.clone()],
        eta: vec![None],
        duals: vec![None],
        reports: Vec::with_capacity(steps),
        grid: spec.grid.clone(),
        strain_kind: spec.dissipation.kind,
        q: spec.dissipation.q,
    };
    let mut w = spec.u0.axpy(-tau, &spec.v0);
    for n in 1..=steps {
        let t_prev = (n - 1) as f64 * tau;
        let t_n = n as f64 * tau;
        let step = |e: Error| Error::Step { index: n, source: Box::new(e) };
        let u_prev = &traj.u[n - 1];
        let v_prev = &traj.v[n - 1];
        let f_avg = match &spec.force {
            Some(f) => average_force(f.as_ref(), t_prev, t_n).map_err(step)?,
            None => spec.grid.zeros(),
        };
        let b = spec.perturbation.evaluate(t_n, u_prev, v_prev);
        if !b.is_finite() {
            return Err(step(Error::eval("perturbation")));
        }
        let inp = StepInput {
            tau,
            t_prev,
            v: u_prev.clone(),
            w: w.clone(),
            zeta: b.sub(&f_avg),
            state_for_psi: u_prev.clone(),
        };
        let out = incremental_minimize(spec, &inp, None, opts).map_err(step)?;
        let vel = Field(out.u.iter().zip(u_prev.iter()).map(|(a, b)| (a - b) / tau).collect());
        w = inp.v;
        traj.times.push(t_n);
        traj.u.push(out.u);
        traj.v.push(vel);
        traj.eta.push(Some(out.eta));
        traj.duals.push(out.dual);
        traj.reports.push(out.report);
    }
    Ok(traj)
}

/// Piecewise constant and linear reconstructions of a trajectory.
#[derive(Clone, Copy)]
pub struct InterpolantSet<'a> {
    traj: &'a Trajectory,
}

impl<'a> InterpolantSet<'a> {
    /// `(n, theta)` with `t = t_{n-1} + theta * tau`, `theta in (0, 1]`, and `n = 0` at `t = 0`.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let t_end = self.traj.horizon();
        let tau = self.traj.tau;
        let slack = 1e-12 * t_end.max(1.0);
        if !(t >= -slack && t <= t_end + slack) {
            return Err(Error::Domain { t, horizon: t_end });
        }
        let steps = self.traj.steps();
        if t <= 0.0 || steps == 0 {
            return Ok((0, 1.0));
        }
        let k = t / tau;
        let r = k.round();
        let n = if (k - r).abs() <= 1e-9 { r as usize } else { k.ceil() as usize };
        let n = n.clamp(1, steps);
        let theta = ((t - self.traj.times[n - 1]) / tau).clamp(0.0, 1.0);
        Ok((n, theta))
    }

    fn right_index(&self, t: f64) -> Result<usize> {
        Ok(self.locate(t)?.0)
    }

    fn left_index(&self, t: f64) -> Result<usize> {
        let (n, theta) = self.locate(t)?;
        if n == 0 {
            return Ok(0);
        }
        Ok(if theta >= 1.0 { n } else { n - 1 })
    }

    pub fn t_bar(&self, t: f64) -> Result<f64> {
        Ok(self.traj.times[self.right_index(t)?])
    }

    pub fn t_under(&self, t: f64) -> Result<f64> {
        Ok(self.traj.times[self.left_index(t)?])
    }

    pub fn u_bar(&self, t: f64) -> Result<&'a Field> {
        Ok(&self.traj.u[self.right_index(t)?])
    }

    pub fn u_under(&self, t: f64) -> Result<&'a Field> {
        Ok(&self.traj.u[self.left_index(t)?])
    }

    pub fn u_hat(&self, t: f64) -> Result<Field> {
        let (n, theta) = self.locate(t)?;
        Ok(lerp(&self.traj.u, n, theta))
    }

    pub fn v_bar(&self, t: f64) -> Result<&'a Field> {
        Ok(&self.traj.v[self.right_index(t)?])
    }

    pub fn v_under(&self, t: f64) -> Result<&'a Field> {
        Ok(&self.traj.v[self.left_index(t)?])
    }

    pub fn v_hat(&self, t: f64) -> Result<Field> {
        let (n, theta) = self.locate(t)?;
        Ok(lerp(&self.traj.v, n, theta))
    }
}

fn lerp(values: &[Field], n: usize, theta: f64) -> Field {
    if n == 0 {
        return values[0].clone();
    }
    let (a, b) = (&values[n - 1], &values[n]);
    Field(a.iter().zip(b.iter()).map(|(a, b)| a + theta * (b - a)).collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::BoundaryCondition;
    use crate::problem::{DissipationSpec, EnergySpec, PerturbationSpec};

    fn scalar_toy() -> ProblemSpec {
        // one interior node with h = 1
        let grid = SpatialGrid::new(3, 1.0, BoundaryCondition::Dirichlet0).unwrap();
        ProblemSpec {
            name: "toy".into(),
            energy: EnergySpec::quadratic(BandMatrix::identity(1)),
            dissipation: DissipationSpec::uniform(&grid, DissipationKind::Separable, 0.0, 1.0, 2.0, 0.0),
            perturbation: PerturbationSpec::zero(),
            force: None,
            horizon: 1.0,
            u0: grid.zeros(),
            v0: grid.zeros(),
            grid,
        }
    }

    #[test]
    fn gauss_rule_averages() {
        let c = average_force(&|_| vec![2.5, -1.0], 0.3, 0.7).unwrap();
        assert!((c[0] - 2.5).abs() < 1e-15 && (c[1] + 1.0).abs() < 1e-15);
        let lin = average_force(&|t| vec![t], 0.0, 1.0).unwrap();
        assert!((lin[0] - 0.5).abs() < 1e-15);
        let s = average_force(&|t| vec![t.sin()], 0.0, 0.1).unwrap();
        assert!((s[0] - (1.0 - 0.1f64.cos()) / 0.1).abs() < 1e-14);
        let p9 = average_force(&|t| vec![t.powi(9)], 0.0, 1.0).unwrap();
        assert!((p9[0] - 0.1).abs() < 1e-14);
        assert!(average_force(&|_| vec![f64::NAN], 0.0, 1.0).is_err());
        assert!(average_force(&|_| vec![0.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn scalar_toy_step() {
        let spec = scalar_toy();
        let inp = StepInput {
            tau: 1.0,
            t_prev: 0.0,
            v: Field(vec![0.0]),
            w: Field(vec![0.0]),
            zeta: Field(vec![-1.0]),
            state_for_psi: Field(vec![0.0]),
        };
        let out = incremental_minimize(&spec, &inp, None, &SolverOptions::default()).unwrap();
        // brute force over a grid of u
        let phi = |u: f64| 1.5 * u * u - u;
        let best = (0..=200_000)
            .map(|k| -1.0 + k as f64 * 1e-5)
            .min_by(|a, b| phi(*a).total_cmp(&phi(*b)))
            .unwrap();
        assert!((out.u[0] - best).abs() < 1e-5);
        assert!((out.u[0] - 1.0 / 3.0).abs() < 1e-9);
        assert!((out.eta[0] - 1.0 / 3.0).abs() < 1e-9);
        assert!(out.report.fy_gap <= 1e-9);
        assert!(out.report.phi_value <= out.report.phi_stay);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let mut spec = scalar_toy();
        spec.energy.lambda_conv = 4.0;
        let err = run(&spec, 0.25).unwrap_err();
        assert!(matches!(err, Error::StepSizeTooLarge { .. }));
    }

    #[test]
    fn step_count_requires_tiling() {
        assert_eq!(step_count(1.0, 0.1).unwrap(), 10);
        assert!(step_count(1.0, 0.3).is_err());
    }

    #[test]
    fn tiling_step_stays_below_cap() {
        assert_eq!(tiling_step(1.0, 0.3).unwrap(), 0.25);
        assert_eq!(tiling_step(1.0, 5.0).unwrap(), 1.0);
        for cap in [0.586, 0.125, 0.0731, 1e-3] {
            let tau = tiling_step(1.0, cap).unwrap();
            assert!(tau <= cap * (1.0 + 1e-12));
            assert!(step_count(1.0, tau).is_ok());
        }
    }

    #[test]
    fn zero_data_stay_zero() {
        let spec = scalar_toy();
        let traj = run(&spec, 0.1).unwrap();
        assert_eq!(traj.steps(), 10);
        for n in 0..=10 {
            assert_eq!(traj.u[n][0], 0.0);
        }
        assert!(traj.eta.iter().skip(1).all(|e| e.as_ref().unwrap()[0] == 0.0));
    }

    #[test]
    fn interpolants_at_nodes_and_midpoints() {
        let mut spec = scalar_toy();
        spec.u0 = Field(vec![1.0]);
        spec.force = Some(Arc::new(|t| vec![t]));
        let traj = run(&spec, 0.25).unwrap();
        let ip = traj.interpolants().unwrap();
        for n in 0..=4 {
            let t = traj.times[n];
            assert_eq!(ip.u_bar(t).unwrap(), &traj.u[n]);
            assert_eq!(ip.u_hat(t).unwrap()[0], traj.u[n][0]);
            assert_eq!(ip.u_under(t).unwrap(), &traj.u[n]);
        }
        let mid = 0.5 * (traj.times[1] + traj.times[2]);
        assert_eq!(ip.u_bar(mid).unwrap(), &traj.u[2]);
        assert_eq!(ip.u_under(mid).unwrap(), &traj.u[1]);
        assert!((ip.u_hat(mid).unwrap()[0] - 0.5 * (traj.u[1][0] + traj.u[2][0])).abs() < 1e-15);
        assert_eq!(ip.t_bar(0.0).unwrap(), 0.0);
        assert_eq!(ip.t_bar(0.3).unwrap(), 0.5);
        assert_eq!(ip.t_under(0.3).unwrap(), 0.25);
        assert!(matches!(ip.u_bar(1.5), Err(Error::Domain { .. })));
        // the linear interpolant has slope V^n on each cell
        let (a, b) = (0.3, 0.4);
        let slope = (ip.u_hat(b).unwrap()[0] - ip.u_hat(a).unwrap()[0]) / (b - a);
        assert!((slope - traj.v[2][0]).abs() < 1e-12);
    }
}
