//! Energy-dissipation bookkeeping, a priori monitors, interpolant deviations
//! and step-refinement studies.

use rayon::prelude::*;

use crate::convex::{ForwardDifference, LinearOperator};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::problem::{DissipationKind, ProblemSpec};
use crate::stepper::{average_force, gauss5, run_with, SolverOptions, Trajectory};

/// Relative floor of the energy-dissipation tolerance.
pub const EDI_FLOOR: f64 = 1e-8;
/// Allowed relative mismatch between a stored `eta` and the discrete inclusion.
pub const EL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct EDIRecord {
    pub n: usize,
    pub t: f64,
    pub kinetic: f64,
    pub energy: f64,
    /// `sum_k tau Psi(V^k)`
    pub psi_accum: f64,
    /// `sum_k tau Psi*(eta^k)`
    pub psi_star_accum: f64,
    /// `sum_k tau Psi(V^k) + tau Psi*(eta^k)` plus kinetic and stored energy at `t_n`.
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tol: f64,
    /// Relative defect of the discrete inclusion evaluated with the stored `eta^n`.
    pub el_defect: f64,
    /// Inequality term dropped from `rhs` to get the balance: `lambda tau sum |V|^2`.
    pub slack: f64,
}

impl EDIRecord {
    pub fn holds(&self) -> bool {
        self.residual <= self.tol && self.el_defect <= EL_TOL
    }
}

fn check_complete(traj: &Trajectory) -> Result<()> {
    let n = traj.steps();
    if traj.u.len() != n + 1 || traj.v.len() != n + 1 || traj.reports.len() != n {
        return Err(Error::IncompleteTrajectory("record lengths disagree".into()));
    }
    if traj.eta.len() != n + 1 {
        return Err(Error::IncompleteTrajectory("eta list has the wrong length".into()));
    }
    if let Some(k) = (1..=n).find(|&k| traj.eta[k].is_none()) {
        return Err(Error::IncompleteTrajectory(format!("missing eta at step {k}")));
    }
    Ok(())
}

/// Fenchel-Young residual of the stored `eta^n` against `V^n`, using the stored
/// edge dual to resolve the composite conjugate.
fn stored_gap(spec: &ProblemSpec, traj: &Trajectory, n: usize) -> f64 {
    let grid = &spec.grid;
    let eta = traj.eta[n].as_ref().expect("checked complete");
    let pots = spec.dissipation.potentials(&traj.u[n - 1]);
    if pots.iter().all(|p| p.is_zero()) {
        return 0.0;
    }
    let v = &traj.v[n];
    match spec.dissipation.kind {
        DissipationKind::Separable => {
            grid.h() * v.iter().zip(eta.iter()).zip(&pots).map(|((s, x), p)| p.fy_residual(*s, *x)).sum::<f64>()
        }
        DissipationKind::GradComposite => {
            let s = grid.grad_field(v);
            let h = grid.h();
            let mut p = vec![0.0; grid.n_edges()];
            let hint = traj.duals[n].clone().unwrap_or_else(|| grid.edge_zeros());
            ForwardDifference::new(grid).project_dual(eta, &hint, &mut p);
            h * s.iter().zip(&p).zip(&pots).map(|((s, x), pot)| pot.fy_residual(*s, *x)).sum::<f64>()
        }
    }
}

/// Both sides of the discrete energy-dissipation inequality at every node.
pub fn edi_scan(spec: &ProblemSpec, traj: &Trajectory) -> Result<Vec<EDIRecord>> {
    check_complete(traj)?;
    let grid = &spec.grid;
    let tau = traj.tau;
    let lambda = spec.energy.lambda_conv;
    let nn = grid.interior();
    let e0 = spec.energy.value(grid, 0.0, &traj.u[0]);
    let k0 = 0.5 * grid.inner(&traj.v[0], &traj.v[0]);
    let mut records = vec![EDIRecord {
        n: 0,
        t: 0.0,
        kinetic: k0,
        energy: e0,
        psi_accum: 0.0,
        psi_star_accum: 0.0,
        lhs: k0 + e0,
        rhs: k0 + e0,
        residual: 0.0,
        tol: EDI_FLOOR * (1.0 + (k0 + e0).abs()),
        el_defect: 0.0,
        slack: 0.0,
    }];
    let (mut psi_acc, mut star_acc, mut power_acc, mut slack, mut gaps) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for n in 1..=traj.steps() {
        let t_prev = traj.times[n - 1];
        let t_n = traj.times[n];
        let (u_prev, v_prev) = (&traj.u[n - 1], &traj.v[n - 1]);
        let (u, v) = (&traj.u[n], &traj.v[n]);
        let eta = traj.eta[n].as_ref().expect("checked complete");

        let f_avg = match &spec.force {
            Some(f) => average_force(f.as_ref(), t_prev, t_n)?,
            None => grid.zeros(),
        };
        let b = spec.perturbation.evaluate(t_n, u_prev, v_prev);
        let source = f_avg.sub(&b);

        let psi = spec.dissipation.value(grid, u_prev, v);
        let pairing = grid.inner(eta, v);
        let gap = stored_gap(spec, traj, n);
        let psi_star = pairing - psi + gap;
        psi_acc += tau * psi;
        star_acc += tau * psi_star;

        let mut dt_int = 0.0;
        if spec.energy.is_time_dependent() {
            for (r, wt) in gauss5(t_prev, t_n) {
                dt_int += wt * tau * spec.energy.time_derivative(r, u_prev);
            }
        }
        power_acc += dt_int + tau * grid.inner(&source, v);
        slack += lambda * tau * tau * grid.inner(v, v);
        gaps += traj.reports[n - 1].fy_gap.max(0.0);

        // discrete inclusion with the stored eta
        let mut de = vec![0.0; nn];
        spec.energy.gradient(t_n, u, &mut de);
        let mut defect = 0.0;
        let mut size = 0.0;
        for i in 0..nn {
            let acc = (v[i] - v_prev[i]) / tau;
            let r = acc + eta[i] + de[i] - source[i];
            defect += r * r;
            size += acc * acc + de[i] * de[i] + source[i] * source[i];
        }
        let el_defect = (grid.h() * defect).sqrt() / (1.0 + (grid.h() * size).sqrt());

        let kinetic = 0.5 * grid.inner(v, v);
        let energy = spec.energy.value(grid, t_n, u);
        let lhs = kinetic + energy + psi_acc + star_acc;
        let rhs = k0 + e0 + power_acc + slack;
        let fin = [lhs, rhs, psi_acc, star_acc].iter().all(|x| x.is_finite());
        if !fin {
            return Err(Error::eval(format!("energy bookkeeping at step {n}")));
        }
        records.push(EDIRecord {
            n,
            t: t_n,
            kinetic,
            energy,
            psi_accum: psi_acc,
            psi_star_accum: star_acc,
            lhs,
            rhs,
            residual: lhs - rhs,
            tol: gaps + EDI_FLOOR * (1.0 + rhs.abs()),
            el_defect,
            slack,
        });
    }
    Ok(records)
}

/// `|LHS - RHS|` of the energy-dissipation balance at the node `t`.
pub fn energy_balance_residual(spec: &ProblemSpec, traj: &Trajectory, t: f64) -> Result<f64> {
    let records = edi_scan(spec, traj)?;
    let n = (t / traj.tau).round() as usize;
    if n > traj.steps() || (n as f64 * traj.tau - t).abs() > 1e-9 * traj.tau {
        return Err(Error::Domain { t, horizon: traj.horizon() });
    }
    let r = &records[n];
    Ok((r.residual + r.slack).abs())
}

/// Largest `balance residual` over all nodes.
pub fn max_balance_residual(spec: &ProblemSpec, traj: &Trajectory) -> Result<f64> {
    let records = edi_scan(spec, traj)?;
    Ok(records.iter().map(|r| (r.residual + r.slack).abs()).fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub sup_velocity: f64,
    pub sup_kinetic: f64,
    pub sup_energy: f64,
    pub psi_total: f64,
    pub psi_star_total: f64,
    pub finite: bool,
}

impl BoundsReport {
    pub fn as_array(&self) -> [f64; 5] {
        [self.sup_velocity, self.sup_kinetic, self.sup_energy, self.psi_total, self.psi_star_total]
    }
}

pub fn apriori_monitor(spec: &ProblemSpec, traj: &Trajectory) -> BoundsReport {
    let grid = &spec.grid;
    let mut rep = BoundsReport {
        sup_velocity: 0.0,
        sup_kinetic: 0.0,
        sup_energy: f64::NEG_INFINITY,
        psi_total: 0.0,
        psi_star_total: 0.0,
        finite: true,
    };
    for (n, v) in traj.v.iter().enumerate() {
        let nv = grid.norm(v);
        rep.sup_velocity = rep.sup_velocity.max(nv);
        rep.sup_kinetic = rep.sup_kinetic.max(0.5 * nv * nv);
        let e = spec.energy.value(grid, traj.times[n], &traj.u[n]);
        rep.sup_energy = rep.sup_energy.max(e);
        rep.finite &= e.is_finite() && nv.is_finite();
    }
    match edi_scan(spec, traj) {
        Ok(l) => {
            let last = l.last().expect("records start at n = 0");
            rep.psi_total = last.psi_accum;
            rep.psi_star_total = last.psi_star_accum;
        }
        Err(_) => rep.finite = false,
    }
    rep.finite &= rep.as_array().iter().all(|x| x.is_finite());
    rep
}

/// `(sup_t ||U_hat - U_bar||, sup_t |V_hat - V_bar|_h)`, sampled at ten points per cell.
pub fn deviation_norms(traj: &Trajectory) -> (f64, f64) {
    let grid = &traj.grid;
    let (mut du, mut dv): (f64, f64) = (0.0, 0.0);
    for n in 1..=traj.steps() {
        let inc_u = traj.increment_norm(n);
        let inc_v = grid.norm(&traj.v[n].sub(&traj.v[n - 1]));
        // on (t_{n-1}, t_n] the gap is (1 - theta) times the increment; theta = 0 is the
        // right limit at t_{n-1}
        for j in 0..10 {
            let w = 1.0 - j as f64 / 10.0;
            du = du.max(w * inc_u);
            dv = dv.max(w * inc_v);
        }
    }
    (du, dv)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub taus: Vec<f64>,
    pub sup_u_dev: Vec<f64>,
    pub sup_v_dev: Vec<f64>,
    /// `cauchy[k]`: `max_n |U_{tau_k}(t_n) - U_{tau_{k+1}}(t_n)|_h` on the coarse nodes.
    pub cauchy: Vec<f64>,
    /// `rates[k] = log2(cauchy[k] / cauchy[k + 1])`.
    pub rates: Vec<f64>,
}

pub fn convergence_study(spec: &ProblemSpec, tau0: f64, halvings: usize) -> Result<ConvergenceTable> {
    convergence_study_with(spec, tau0, halvings, &SolverOptions::default()).map(|(t, _)| t)
}

/// Also hands back the trajectories, finest last.
pub fn convergence_study_with(
    spec: &ProblemSpec,
    tau0: f64,
    halvings: usize,
    opts: &SolverOptions,
) -> Result<(ConvergenceTable, Vec<Trajectory>)> {
    if halvings == 0 {
        return Err(Error::config("a convergence study needs at least one halving"));
    }
    let taus: Vec<f64> = (0..=halvings).map(|k| tau0 / 2f64.powi(k as i32)).collect();
    let runs: Vec<Trajectory> = taus.par_iter().map(|&tau| run_with(spec, tau, opts)).collect::<Result<_>>()?;
    let grid = &spec.grid;
    let (sup_u_dev, sup_v_dev): (Vec<f64>, Vec<f64>) = runs.iter().map(deviation_norms).unzip();
    let cauchy: Vec<f64> = runs
        .windows(2)
        .map(|pair| {
            let (coarse, fine) = (&pair[0], &pair[1]);
            (0..=coarse.steps())
                .map(|n| grid.norm(&coarse.u[n].sub(&fine.u[2 * n])))
                .fold(0.0, f64::max)
        })
        .collect();
    let rates = cauchy.windows(2).map(|c| (c[0] / c[1]).log2()).collect();
    Ok((ConvergenceTable { taus, sup_u_dev, sup_v_dev, cauchy, rates }, runs))
}

/// `(sum_n tau |U^n - u(t_n)|_h^2)^{1/2}` against a reference solution.
pub fn l2_time_error(traj: &Trajectory, exact: &dyn Fn(f64) -> Field) -> f64 {
    let grid = &traj.grid;
    let s: f64 = (1..=traj.steps())
        .map(|n| {
            let d = traj.u[n].sub(&exact(traj.times[n]));
            grid.inner(&d, &d)
        })
        .sum();
    (traj.tau * s).sqrt()
}
