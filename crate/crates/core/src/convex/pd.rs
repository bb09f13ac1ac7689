//! Primal-dual splitting for `min_u S(u) + F(K u)` where `S` is smooth and
//! strongly convex and `F(z) = scale * h * sum_e phi_e((z_e - c_e) / scale)`.
//!
//! The primal step is the exact proximal map of `S` (Newton on a banded
//! Hessian); the dual step is the closed-form prox of `F*` through the Moreau
//! identity. With both `S` and `F*` strongly convex the iteration converges
//! linearly, otherwise the step sizes follow the accelerated `O(1/k^2)` rule.
//! At a doubling schedule of iterations a semismooth Newton pass on the
//! optimality system tries to finish from the current iterate.
//!
//! Stopping uses a certified gap: the dual iterate is projected onto
//! `{p : K^T p = -grad S(u)}`, and for that `p` the Fenchel-Young residual of
//! `F` bounds the primal suboptimality from above.

use crate::convex::potential::SeparablePotential;
use crate::error::{Error, Result, Unconverged};
use crate::grid::{Field, SpatialGrid};
use crate::linalg::{BandCholesky, BandMatrix};
use nalgebra::{DMatrix, DVector};

/// Linear map between h-weighted spaces.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn adjoint(&self, p: &[f64], out: &mut [f64]);
    /// Upper bound on the operator norm.
    fn norm(&self) -> f64;
    /// Projection of `hint` onto `{p : K^T p = eta}` (assumed nonempty).
    fn project_dual(&self, eta: &[f64], hint: &[f64], out: &mut [f64]);
    /// Basis vector of the kernel of `K^T` when it is one-dimensional.
    fn dual_kernel(&self) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IdentityOp(pub usize);

impl LinearOperator for IdentityOp {
    fn rows(&self) -> usize {
        self.0
    }
    fn cols(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn adjoint(&self, p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(p);
    }
    fn norm(&self) -> f64 {
        1.0
    }
    fn project_dual(&self, eta: &[f64], _hint: &[f64], out: &mut [f64]) {
        out.copy_from_slice(eta);
    }
}

/// Discrete gradient `D` of a Dirichlet grid.
#[derive(Clone, Debug)]
pub struct ForwardDifference {
    grid: SpatialGrid,
}

impl ForwardDifference {
    pub fn new(grid: &SpatialGrid) -> Self {
        Self { grid: grid.clone() }
    }
}

impl LinearOperator for ForwardDifference {
    fn rows(&self) -> usize {
        self.grid.n_edges()
    }
    fn cols(&self) -> usize {
        self.grid.interior()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.grid.grad(x, out);
    }
    fn adjoint(&self, p: &[f64], out: &mut [f64]) {
        self.grid.grad_adjoint(p, out);
    }
    fn norm(&self) -> f64 {
        let n = self.grid.interior() as f64;
        2.0 / self.grid.h() * (std::f64::consts::PI * n / (2.0 * (n + 1.0))).sin()
    }
    fn project_dual(&self, eta: &[f64], hint: &[f64], out: &mut [f64]) {
        // (D^T p)_i = (p_i - p_{i+1}) / h: p is fixed up to a constant
        let h = self.grid.h();
        out[0] = 0.0;
        for i in 0..eta.len() {
            out[i + 1] = out[i] - h * eta[i];
        }
        let shift = hint.iter().zip(out.iter()).map(|(a, b)| a - b).sum::<f64>() / out.len() as f64;
        for p in out.iter_mut() {
            *p += shift;
        }
    }
    fn dual_kernel(&self) -> Option<Vec<f64>> {
        Some(vec![1.0; self.grid.n_edges()])
    }
}

/// Smooth, strongly convex part of an inner problem.
pub trait SmoothObjective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, u: &[f64]) -> f64;
    /// Riesz gradient for the h-pairing.
    fn gradient(&self, u: &[f64], out: &mut [f64]);
    /// Riesz Hessian (symmetric, banded).
    fn hessian(&self, u: &[f64]) -> BandMatrix;
    /// Certified lower bound on the strong convexity modulus.
    fn strong_convexity(&self) -> f64;
    /// Constant Hessian: one Newton step solves any prox exactly.
    fn is_quadratic(&self) -> bool {
        false
    }
}

pub struct PDProblem<'a> {
    pub smooth: &'a dyn SmoothObjective,
    pub lin_op: &'a dyn LinearOperator,
    /// One potential per row of `lin_op`.
    pub nonsmooth: Vec<SeparablePotential>,
    /// Shift `c` inside `F`.
    pub offset: Vec<f64>,
    /// Outer scale of `F` (the time step for incremental problems).
    pub scale: f64,
    /// Quadrature weight `h` of both pairings.
    pub weight: f64,
    /// Tolerance on the Fenchel-Young gap, in units of `phi`.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PDReport {
    pub iterations: usize,
    /// Fenchel-Young gap `h * sum(phi(s) + phi*(p) - p s)`, `s = (Ku - c)/scale`.
    pub gap: f64,
    pub primal_value: f64,
}

#[derive(Clone, Debug)]
pub struct PDSolution {
    pub primal: Field,
    /// Feasible dual: `K^T p = -grad S(primal)` exactly.
    pub dual: Field,
    /// Raw dual iterate before projection.
    pub dual_iterate: Field,
    pub report: PDReport,
}

impl PDProblem<'_> {
    pub fn strain(&self, u: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.lin_op.rows()];
        self.lin_op.apply(u, &mut z);
        z.iter().zip(&self.offset).map(|(z, c)| (z - c) / self.scale).collect()
    }

    pub fn primal_value(&self, u: &[f64]) -> f64 {
        let s = self.strain(u);
        let f: f64 = s.iter().zip(&self.nonsmooth).map(|(s, p)| p.value(*s)).sum();
        self.smooth.value(u) + self.scale * self.weight * f
    }

    /// Certified gap and feasible dual at `u`, using `hint` to fix the dual's
    /// free directions.
    pub fn gap_at(&self, u: &[f64], hint: &[f64]) -> (f64, Field) {
        let n = self.smooth.dim();
        let mut eta = vec![0.0; n];
        self.smooth.gradient(u, &mut eta);
        eta.iter_mut().for_each(|x| *x = -*x);
        let mut p = Field::zeros(self.lin_op.rows());
        self.lin_op.project_dual(&eta, hint, &mut p);
        let s = self.strain(u);
        let residual = |p: &[f64], c: f64, k: &[f64]| {
            self.weight
                * s.iter()
                    .zip(p)
                    .zip(k)
                    .zip(&self.nonsmooth)
                    .map(|(((&s, &p), &k), pot)| pot.fy_residual(s, p + c * k))
                    .sum::<f64>()
        };
        let zeros = vec![0.0; p.len()];
        (residual(&p, 0.0, &zeros), p)
    }

    /// `argmin_q F*(q) + |q - y|^2 / (2 sigma)`, per row.
    fn dual_prox(&self, sigma: f64, y: &mut [f64]) {
        let gamma = sigma * self.scale;
        for ((y, c), pot) in y.iter_mut().zip(&self.offset).zip(&self.nonsmooth) {
            let z = *y - sigma * c;
            // prox_{gamma phi*}(z) = z - gamma prox_{phi/gamma}(z/gamma)
            *y = z - gamma * pot.prox(1.0 / gamma, z / gamma);
        }
    }

    /// Strong convexity modulus of `F*` in the h-norm (0 if unknown).
    fn dual_modulus(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for pot in &self.nonsmooth {
            if pot.a > 0.0 {
                // F* is flat on the friction ball
                return 0.0;
            }
            match pot.max_curvature() {
                Some(c) => worst = worst.max(c),
                None => return 0.0,
            }
        }
        if worst > 0.0 {
            self.scale / worst
        } else {
            0.0
        }
    }
}

/// Exact proximal map of the smooth part: `argmin S(u) + |u - center|^2 / (2 t)`.
pub struct SmoothProx<'a> {
    smooth: &'a dyn SmoothObjective,
    weight: f64,
    cached: Option<(f64, BandCholesky)>,
}

impl<'a> SmoothProx<'a> {
    /// `weight` is the quadrature weight of the norm in the proximal term.
    pub fn new(smooth: &'a dyn SmoothObjective, weight: f64) -> Self {
        Self { smooth, weight, cached: None }
    }

    pub fn apply(&mut self, t: f64, center: &[f64], u: &mut [f64]) -> Result<()> {
        let n = self.smooth.dim();
        let mut g = vec![0.0; n];
        let inv_t = 1.0 / t;
        let objective = |x: &[f64]| {
            self.smooth.value(x)
                + 0.5 * inv_t * self.weight * x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        for _ in 0..50 {
            self.smooth.gradient(u, &mut g);
            for i in 0..n {
                g[i] = -(g[i] + (u[i] - center[i]) * inv_t);
            }
            let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if gnorm == 0.0 {
                return Ok(());
            }
            if self.smooth.is_quadratic() {
                let reuse = matches!(&self.cached, Some((tc, _)) if *tc == t);
                if !reuse {
                    let mut h = self.smooth.hessian(u);
                    h.add_to_diagonal(inv_t);
                    self.cached = Some((t, BandCholesky::factor(&h)?));
                }
                let chol = &self.cached.as_ref().expect("factor cached above").1;
                chol.solve_in_place(&mut g);
                u.iter_mut().zip(&g).for_each(|(x, d)| *x += d);
                return Ok(());
            }
            let mut h = self.smooth.hessian(u);
            h.add_to_diagonal(inv_t);
            BandCholesky::factor(&h)?.solve_in_place(&mut g);
            let f0 = objective(u);
            let mut step = 1.0;
            let mut trial = vec![0.0; n];
            loop {
                for i in 0..n {
                    trial[i] = u[i] + step * g[i];
                }
                let f1 = objective(&trial);
                if f1 <= f0 + 1e-14 * f0.abs().max(1.0) || step < 1e-8 {
                    break;
                }
                step *= 0.5;
            }
            let dnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt() * step;
            let unorm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            u.copy_from_slice(&trial);
            if dnorm <= 1e-15 * unorm.max(1.0) {
                return Ok(());
            }
        }
        Ok(())
    }
}

/// Semismooth Newton on the optimality system
/// `grad S(u) + K^T p = 0`, `s(u) = prox_{gamma phi}(s(u) + gamma p)`, started
/// from a primal-dual iterate. Returns the first pair whose certified gap meets
/// the tolerance.
fn newton_polish(prob: &PDProblem<'_>, u0: &[f64], p0: &[f64]) -> Option<(Vec<f64>, f64, Field)> {
    let n = prob.smooth.dim();
    let m = prob.lin_op.rows();
    let mut kmat = DMatrix::<f64>::zeros(m, n);
    let mut ktmat = DMatrix::<f64>::zeros(n, m);
    let mut e = vec![0.0; n.max(m)];
    let mut col = vec![0.0; n.max(m)];
    for j in 0..n {
        e[j] = 1.0;
        prob.lin_op.apply(&e[..n], &mut col[..m]);
        kmat.column_mut(j).copy_from_slice(&col[..m]);
        e[j] = 0.0;
    }
    for j in 0..m {
        e[j] = 1.0;
        prob.lin_op.adjoint(&e[..m], &mut col[..n]);
        ktmat.column_mut(j).copy_from_slice(&col[..n]);
        e[j] = 0.0;
    }
    let gammas: Vec<f64> = prob
        .nonsmooth
        .iter()
        .map(|pot| {
            let c = pot.g + pot.nu;
            if c > 0.0 {
                1.0 / c
            } else {
                1.0
            }
        })
        .collect();
    let residual = |u: &[f64], p: &[f64]| -> (Vec<f64>, f64) {
        let mut r = vec![0.0; n + m];
        prob.smooth.gradient(u, &mut r[..n]);
        let mut ktp = vec![0.0; n];
        prob.lin_op.adjoint(p, &mut ktp);
        for i in 0..n {
            r[i] += ktp[i];
        }
        let s = prob.strain(u);
        for (k, pot) in prob.nonsmooth.iter().enumerate() {
            r[n + k] = s[k] - pot.prox(gammas[k], s[k] + gammas[k] * p[k]);
        }
        let norm = r.iter().map(|x| x * x).sum::<f64>();
        (r, norm)
    };
    let (mut u, mut p) = (u0.to_vec(), p0.to_vec());
    let (mut r, mut merit) = residual(&u, &p);
    for _ in 0..40 {
        if !merit.is_finite() {
            return None;
        }
        let h = prob.smooth.hessian(&u);
        let s = prob.strain(&u);
        let mut jac = DMatrix::<f64>::zeros(n + m, n + m);
        for i in 0..n {
            let lo = i.saturating_sub(h.bandwidth());
            let hi = (i + h.bandwidth() + 1).min(n);
            for j in lo..hi {
                jac[(i, j)] = h.get(i, j);
            }
        }
        jac.view_mut((0, n), (n, m)).copy_from(&ktmat);
        for (k, pot) in prob.nonsmooth.iter().enumerate() {
            let d = pot.prox_derivative(gammas[k], s[k] + gammas[k] * p[k]);
            for j in 0..n {
                jac[(n + k, j)] = (1.0 - d) / prob.scale * kmat[(k, j)];
            }
            jac[(n + k, n + k)] = -d * gammas[k];
        }
        let rhs = DVector::from_iterator(n + m, r.iter().map(|x| -x));
        let step = jac.lu().solve(&rhs)?;
        let mut t = 1.0;
        loop {
            let un: Vec<f64> = (0..n).map(|i| u[i] + t * step[i]).collect();
            let pn: Vec<f64> = (0..m).map(|k| p[k] + t * step[n + k]).collect();
            let (rn, mn) = residual(&un, &pn);
            if mn <= (1.0 - 1e-4 * t) * merit || mn == 0.0 {
                u = un;
                p = pn;
                r = rn;
                merit = mn;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return None;
            }
        }
        let (gap, dual) = prob.gap_at(&u, &p);
        if gap <= prob.tol {
            return Some((u, gap, dual));
        }
    }
    None
}

/// Primal-dual splitting; see the module docs.
pub fn solve_pd(prob: &PDProblem<'_>, init: &[f64]) -> Result<PDSolution> {
    let n = prob.smooth.dim();
    let m = prob.lin_op.rows();
    if init.len() != n || prob.nonsmooth.len() != m || prob.offset.len() != m {
        return Err(Error::config("primal-dual problem dimensions disagree"));
    }
    let gamma = prob.smooth.strong_convexity();
    if !(gamma > 0.0) {
        return Err(Error::config("smooth part is not strongly convex"));
    }
    let delta = prob.dual_modulus();
    let l = prob.lin_op.norm();

    let mut u = init.to_vec();
    let mut u_bar = u.clone();
    let mut u_prev = u.clone();
    let mut p = vec![0.0; m];
    let mut kx = vec![0.0; m];
    let mut ktp = vec![0.0; n];
    let mut center = vec![0.0; n];
    let mut prox = SmoothProx::new(prob.smooth, prob.weight);

    let (mut tau_p, mut sigma, mut theta);
    let linear = delta > 0.0;
    if linear {
        let mu = 2.0 * (gamma * delta).sqrt() / l;
        tau_p = mu / (2.0 * gamma);
        sigma = mu / (2.0 * delta);
        theta = 1.0 / (1.0 + mu);
    } else {
        tau_p = 1.0 / l;
        sigma = 1.0 / l;
        theta = 1.0;
    }

    let (mut gap, mut best_p) = prob.gap_at(&u, &p);
    let mut best = (gap, u.clone(), best_p.clone());
    let mut iterations = 0;
    let mut next_polish = 25;
    while gap > prob.tol && iterations < prob.max_iter {
        iterations += 1;
        prob.lin_op.apply(&u_bar, &mut kx);
        for e in 0..m {
            p[e] += sigma * kx[e];
        }
        prob.dual_prox(sigma, &mut p);
        prob.lin_op.adjoint(&p, &mut ktp);
        u_prev.copy_from_slice(&u);
        for i in 0..n {
            center[i] = u[i] - tau_p * ktp[i];
        }
        prox.apply(tau_p, &center, &mut u)?;
        if !u.iter().all(|x| x.is_finite()) || !p.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteIterate { iterations });
        }
        if !linear {
            theta = 1.0 / (1.0 + 2.0 * gamma * tau_p).sqrt();
            tau_p *= theta;
            sigma /= theta;
        }
        for i in 0..n {
            u_bar[i] = u[i] + theta * (u[i] - u_prev[i]);
        }
        let (g, pf) = prob.gap_at(&u, &p);
        gap = g;
        best_p = pf;
        if gap < best.0 {
            best = (gap, u.clone(), best_p.clone());
        }
        if gap > prob.tol && iterations == next_polish {
            next_polish *= 2;
            if let Some((un, g, pf)) = newton_polish(prob, &u, &best_p) {
                u = un;
                gap = g;
                best_p = pf;
            }
        }
    }
    if gap > prob.tol {
        return Err(Error::MaxIterExceeded(Box::new(Unconverged {
            primal: Field(best.1),
            dual: best.2,
            iterations,
            gap: best.0,
        })));
    }
    let report = PDReport { iterations, gap, primal_value: prob.primal_value(&u) };
    Ok(PDSolution { primal: Field(u), dual: best_p, dual_iterate: Field(p), report })
}
