//! One-dimensional finite-difference instances: a martensitic visco-elasto-plastic
//! model, a viscously damped Klein-Gordon type equation, a ferromagnetic
//! hysteresis model and a linear damped wave with a closed-form solution.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Field, SpatialGrid};
use crate::linalg::BandMatrix;
use crate::problem::{
    Coefficients, DissipationKind, DissipationSpec, EnergySpec, ForceFn, GrowthBounds, PerturbationSpec, ProblemSpec,
    SmoothEnergy, TimeControl,
};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ExactSolution = Arc<dyn Fn(f64) -> Field + Send + Sync>;

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive, got {x}")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be nonnegative, got {x}")))
    }
}

/// `D^T diag(c) D` for cell coefficients `c` (Riesz form, tridiagonal).
pub fn weighted_laplacian(grid: &SpatialGrid, c: &[f64]) -> BandMatrix {
    let n = grid.interior();
    assert_eq!(c.len(), n + 1);
    let h2 = grid.h() * grid.h();
    let mut k = BandMatrix::zeros(n, 1);
    for i in 0..n {
        k.set(i, i, (c[i] + c[i + 1]) / h2);
        if i + 1 < n {
            k.set(i, i + 1, -c[i + 1] / h2);
            k.set(i + 1, i, -c[i + 1] / h2);
        }
    }
    k
}

pub fn laplacian(grid: &SpatialGrid) -> BandMatrix {
    weighted_laplacian(grid, &vec![1.0; grid.n_edges()])
}

/// Squared second difference with clamped ends, `int |u''|^2` by the trapezoid rule,
/// in Riesz form.
pub fn clamped_bilaplacian(grid: &SpatialGrid) -> BandMatrix {
    let n = grid.interior();
    let nodes = grid.n_nodes();
    let h2 = grid.h() * grid.h();
    let mut a = BandMatrix::zeros(n, 2);
    // node j has unknown j - 1; the ghost beyond each end mirrors the first interior node
    for j in 0..nodes {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(3);
        let weight = if j == 0 || j == nodes - 1 { 0.5 } else { 1.0 };
        if j == 0 {
            row.push((0, 2.0 / h2));
        } else if j == nodes - 1 {
            row.push((n - 1, 2.0 / h2));
        } else {
            for (node, c) in [(j - 1, 1.0), (j, -2.0), (j + 1, 1.0)] {
                if node >= 1 && node <= n {
                    row.push((node - 1, c / h2));
                }
            }
        }
        for &(i, ci) in &row {
            for &(k, ck) in &row {
                a.add(i, k, weight * ci * ck);
            }
        }
    }
    a
}

/// `(1 - s^2)^2`
pub fn double_well(s: f64) -> f64 {
    let d = 1.0 - s * s;
    d * d
}

fn double_well_slope(s: f64) -> f64 {
    4.0 * s * (s * s - 1.0)
}

fn double_well_curvature(s: f64) -> f64 {
    12.0 * s * s - 4.0
}

/// `scale * h * sum_e W((Du)_e)`.
struct StrainDoubleWell {
    grid: SpatialGrid,
    scale: f64,
}

impl SmoothEnergy for StrainDoubleWell {
    fn value(&self, _t: f64, u: &[f64]) -> f64 {
        let e = self.grid.grad_field(u);
        self.scale * self.grid.h() * e.iter().map(|&s| double_well(s)).sum::<f64>()
    }

    fn gradient(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        let e = self.grid.grad_field(u);
        let sigma: Vec<f64> = e.iter().map(|&s| self.scale * double_well_slope(s)).collect();
        self.grid.grad_adjoint(&sigma, out);
    }

    fn hessian(&self, _t: f64, u: &[f64]) -> BandMatrix {
        let e = self.grid.grad_field(u);
        let c: Vec<f64> = e.iter().map(|&s| self.scale * double_well_curvature(s)).collect();
        weighted_laplacian(&self.grid, &c)
    }
}

/// `kappa * h * sum_i W(u_i) - <f(t), u>_h`.
struct NodalDoubleWell {
    grid: SpatialGrid,
    kappa: f64,
    force: Option<(ForceFn, ForceFn)>,
}

impl SmoothEnergy for NodalDoubleWell {
    fn value(&self, t: f64, u: &[f64]) -> f64 {
        let w = self.kappa * self.grid.h() * u.iter().map(|&s| double_well(s)).sum::<f64>();
        match &self.force {
            Some((f, _)) => w - self.grid.inner(&f(t), u),
            None => w,
        }
    }

    fn gradient(&self, t: f64, u: &[f64], out: &mut [f64]) {
        for (o, &s) in out.iter_mut().zip(u) {
            *o = self.kappa * double_well_slope(s);
        }
        if let Some((f, _)) = &self.force {
            out.iter_mut().zip(f(t)).for_each(|(o, f)| *o -= f);
        }
    }

    fn hessian(&self, _t: f64, u: &[f64]) -> BandMatrix {
        let d: Vec<f64> = u.iter().map(|&s| self.kappa * double_well_curvature(s)).collect();
        BandMatrix::diagonal(&d)
    }

    fn time_derivative(&self, t: f64, u: &[f64]) -> f64 {
        match &self.force {
            Some((_, df)) => -self.grid.inner(&df(t), u),
            None => 0.0,
        }
    }

    fn is_time_dependent(&self) -> bool {
        self.force.is_some()
    }
}

/// Cell averages of the nodal state, zero boundary values included.
fn cell_average(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..=n)
        .map(|e| {
            let left = if e == 0 { 0.0 } else { u[e - 1] };
            let right = if e == n { 0.0 } else { u[e] };
            0.5 * (left + right)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct P1Params {
    pub rho: f64,
    pub nu: f64,
    pub mu: f64,
    pub alpha: f64,
    /// Initial displacement `amp * sin^2(pi x)`.
    pub amp: f64,
    pub n_nodes: usize,
    pub horizon: f64,
}

impl Default for P1Params {
    fn default() -> Self {
        Self { rho: 1.0, nu: 0.05, mu: 0.1, alpha: 0.5, amp: 0.3, n_nodes: 65, horizon: 1.0 }
    }
}

/// Phase indicator `alpha (sqrt(1 + e^2) - 1)` and its slope.
pub fn phase_indicator(alpha: f64, e: f64) -> f64 {
    alpha * ((1.0 + e * e).sqrt() - 1.0)
}

pub fn phase_indicator_slope(alpha: f64, e: f64) -> f64 {
    alpha * e / (1.0 + e * e).sqrt()
}

pub fn build_p1(params: &P1Params) -> Result<ProblemSpec> {
    positive("rho", params.rho)?;
    positive("nu", params.nu)?;
    positive("mu", params.mu)?;
    nonnegative("alpha", params.alpha)?;
    positive("horizon", params.horizon)?;
    if !params.amp.is_finite() {
        return Err(Error::config("amp must be finite"));
    }
    let grid = SpatialGrid::uniform(params.n_nodes, 1.0, BoundaryCondition::Dirichlet0Clamped)?;
    let inv_rho = 1.0 / params.rho;
    let mut quad = clamped_bilaplacian(&grid);
    let scale_quad = params.mu * inv_rho;
    quad = BandMatrix::zeros(quad.dim(), quad.bandwidth()).plus_scaled(scale_quad, &quad);

    // Hess E >= A - 4 D^T D / rho since W'' >= -4
    let k = laplacian(&grid);
    let lower = quad.plus_scaled(-4.0 * inv_rho, &k);
    let shift = (-lower.min_eigenvalue() / 2.0).max(0.0);
    let lambda_conv = 2.0 * shift;

    let alpha = params.alpha;
    let g = grid.clone();
    let state_dep = Arc::new(move |u: &[f64]| {
        let e = g.grad_field(u);
        Coefficients {
            a: e.iter().map(|&s| inv_rho * phase_indicator_slope(alpha, s).abs()).collect(),
            g: vec![0.0; e.len()],
        }
    });
    let nu = params.nu * inv_rho;
    let dissipation = DissipationSpec {
        kind: DissipationKind::GradComposite,
        q: 2.0,
        visc: nu,
        state_dep,
        growth: GrowthBounds::from_coefficients(alpha * inv_rho, 0.0, 0.0, 2.0, nu, grid.length()),
    };
    let amp = params.amp;
    let u0 = grid.from_fn(|x| amp * (PI * x).sin().powi(2));
    Ok(ProblemSpec {
        name: "p1".into(),
        energy: EnergySpec {
            quad_op: quad,
            smooth_part: Some(Arc::new(StrainDoubleWell { grid: grid.clone(), scale: inv_rho })),
            lambda_conv,
            time_control: TimeControl::default(),
        },
        dissipation,
        perturbation: PerturbationSpec::zero(),
        force: None,
        horizon: params.horizon,
        v0: grid.zeros(),
        u0,
        grid,
    })
}

#[derive(Clone)]
pub struct P2Params {
    pub q: f64,
    pub p: f64,
    pub g1: ScalarFn,
    pub g2: ScalarFn,
    /// `g_min <= g1 <= g_max`
    pub g1_bounds: (f64, f64),
    pub g2_max: f64,
    /// Multiplier of `b(s) = sign(s)|s|^(p-1)`; zero switches the perturbation off.
    pub b_scale: f64,
    /// Initial displacement `amp * sin(pi x)`.
    pub amp: f64,
    pub force: Option<ForceFn>,
    pub n_nodes: usize,
    pub horizon: f64,
}

impl Default for P2Params {
    fn default() -> Self {
        Self {
            q: 2.0,
            p: 1.5,
            g1: Arc::new(|s| 1.0 + s * s / (1.0 + s * s)),
            g2: Arc::new(|s| s.abs() / (1.0 + s.abs())),
            g1_bounds: (1.0, 2.0),
            g2_max: 1.0,
            b_scale: 1.0,
            amp: 0.5,
            force: None,
            n_nodes: 65,
            horizon: 1.0,
        }
    }
}

pub fn build_p2(params: &P2Params) -> Result<ProblemSpec> {
    if !(params.q > 1.0 && params.q.is_finite()) {
        return Err(Error::config(format!("q must exceed 1, got {}", params.q)));
    }
    if !(params.p > 1.0 && params.p <= 2.0) {
        return Err(Error::config(format!("p must lie in (1, 2], got {}", params.p)));
    }
    let (gmin, gmax) = params.g1_bounds;
    positive("g1 lower bound", gmin)?;
    if !(gmax >= gmin && gmax.is_finite()) {
        return Err(Error::config("g1 upper bound must be at least the lower bound"));
    }
    nonnegative("g2 upper bound", params.g2_max)?;
    nonnegative("b_scale", params.b_scale)?;
    positive("horizon", params.horizon)?;
    let grid = SpatialGrid::uniform(params.n_nodes, 1.0, BoundaryCondition::Dirichlet0)?;
    let (g1, g2) = (params.g1.clone(), params.g2.clone());
    let state_dep = Arc::new(move |u: &[f64]| {
        let m = cell_average(u);
        Coefficients { a: m.iter().map(|&s| g2(s)).collect(), g: m.iter().map(|&s| g1(s)).collect() }
    });
    let dissipation = DissipationSpec {
        kind: DissipationKind::GradComposite,
        q: params.q,
        visc: 0.0,
        state_dep,
        growth: GrowthBounds::from_coefficients(params.g2_max, gmin, gmax, params.q, 0.0, grid.length()),
    };
    let perturbation = if params.b_scale > 0.0 {
        let (c, p) = (params.b_scale, params.p);
        PerturbationSpec {
            eval: Some(Arc::new(move |_t, u: &[f64], _v: &[f64]| {
                u.iter().map(|&s| c * s.signum() * s.abs().powf(p - 1.0)).collect()
            })),
            growth_exponent: p,
        }
    } else {
        PerturbationSpec { eval: None, growth_exponent: params.p }
    };
    let amp = params.amp;
    let u0 = grid.from_fn(|x| amp * (PI * x).sin());
    Ok(ProblemSpec {
        name: "p2".into(),
        energy: EnergySpec::quadratic(laplacian(&grid)),
        dissipation,
        perturbation,
        force: params.force.clone(),
        horizon: params.horizon,
        v0: grid.zeros(),
        u0,
        grid,
    })
}

#[derive(Clone)]
pub struct P3Params {
    pub q: f64,
    /// Stiffness `e_min (1 + e_var sin^2(pi x))`.
    pub e_min: f64,
    pub e_var: f64,
    /// Weight of the double well.
    pub kappa: f64,
    /// Force and its time derivative. `None` is zero.
    pub force: Option<(ForceFn, ForceFn)>,
    pub u0: Option<Field>,
    pub v0: Option<Field>,
    pub n_nodes: usize,
    pub horizon: f64,
}

impl Default for P3Params {
    fn default() -> Self {
        Self { q: 2.0, e_min: 1.0, e_var: 0.5, kappa: 1.0, force: None, u0: None, v0: None, n_nodes: 65, horizon: 1.0 }
    }
}

impl P3Params {
    /// Standing load `amp sin(pi x) sin(2 pi freq t)`.
    pub fn with_oscillating_load(mut self, amp: f64, freq: f64) -> Self {
        let grid = SpatialGrid::uniform(self.n_nodes.max(3), 1.0, BoundaryCondition::Dirichlet0).expect("at least 3 nodes");
        let shape = grid.from_fn(|x| (PI * x).sin()).into_vec();
        let s2 = shape.clone();
        let w = 2.0 * PI * freq;
        let f: ForceFn = Arc::new(move |t| shape.iter().map(|s| amp * s * (w * t).sin()).collect());
        let df: ForceFn = Arc::new(move |t| s2.iter().map(|s| amp * w * s * (w * t).cos()).collect());
        self.force = Some((f, df));
        self
    }
}

fn p3_grid(n_nodes: usize) -> Result<SpatialGrid> {
    SpatialGrid::uniform(n_nodes, 1.0, BoundaryCondition::Dirichlet0)
}

pub fn build_p3(params: &P3Params) -> Result<ProblemSpec> {
    if !(params.q >= 2.0 && params.q.is_finite()) {
        return Err(Error::config(format!("q must be at least 2, got {}", params.q)));
    }
    positive("e_min", params.e_min)?;
    nonnegative("e_var", params.e_var)?;
    positive("kappa", params.kappa)?;
    positive("horizon", params.horizon)?;
    let grid = p3_grid(params.n_nodes)?;
    let n = grid.interior();
    let (e_min, e_var) = (params.e_min, params.e_var);
    let stiff: Vec<f64> =
        (0..grid.n_edges()).map(|e| e_min * (1.0 + e_var * (PI * grid.edge_midpoint(e)).sin().powi(2))).collect();
    let quad = weighted_laplacian(&grid, &stiff);

    let kappa = params.kappa;
    let mut time_control = TimeControl::default();
    if let Some((f, df)) = &params.force {
        for g in [f, df] {
            let probe = g(0.0);
            if probe.len() != n || !probe.iter().all(|x| x.is_finite()) {
                return Err(Error::config("force callables must return finite fields on the grid"));
            }
        }
        // |<f', u>| <= c1 (E2 + c0) from W(s) >= s^2 - 5/4 and Young's inequality
        let samples = 256;
        let (mut f0, mut f1): (f64, f64) = (0.0, 0.0);
        for k in 0..=samples {
            let t = params.horizon * k as f64 / samples as f64;
            f0 = f0.max(grid.norm(&f(t)));
            f1 = f1.max(grid.norm(&df(t)));
        }
        let (f0, f1) = (1.01 * f0, 1.01 * f1);
        time_control = TimeControl {
            c1: f1 / kappa,
            shift: 0.5 * kappa + 1.25 * kappa * grid.length() + f0 * f0 / (2.0 * kappa),
        };
    }
    let dissipation = DissipationSpec::uniform(&grid, DissipationKind::Separable, 1.0, 1.0, params.q, 0.0);
    let u0 = params.u0.clone().unwrap_or_else(|| grid.zeros());
    let v0 = params.v0.clone().unwrap_or_else(|| grid.zeros());
    Ok(ProblemSpec {
        name: "p3".into(),
        energy: EnergySpec {
            quad_op: quad,
            smooth_part: Some(Arc::new(NodalDoubleWell { grid: grid.clone(), kappa, force: params.force.clone() })),
            lambda_conv: 4.0 * kappa,
            time_control,
        },
        dissipation,
        perturbation: PerturbationSpec::zero(),
        force: None,
        horizon: params.horizon,
        u0,
        v0,
        grid,
    })
}

/// `c sin(pi x)` with `||A u + DE2(u)||_inf = level` at `t = 0`; below the unit
/// friction threshold this state sticks.
pub fn p3_stick_state(spec: &ProblemSpec, level: f64) -> Result<Field> {
    let grid = &spec.grid;
    let shape = grid.from_fn(|x| (PI * x).sin());
    let drive = |c: f64| {
        let u = shape.scale(c);
        let mut g = vec![0.0; u.len()];
        spec.energy.gradient(0.0, &u, &mut g);
        g.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    };
    let mut hi = 1e-3;
    while drive(hi) < level {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::config("no stick state at the requested level"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if drive(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(shape.scale(lo))
}

/// First Dirichlet eigenpair of the discrete Laplacian on `grid`.
pub fn first_mode(grid: &SpatialGrid) -> (Field, f64) {
    let l = grid.length();
    let h = grid.h();
    let omega2 = 4.0 / (h * h) * (PI * h / (2.0 * l)).sin().powi(2);
    (grid.from_fn(|x| (PI * x / l).sin()), omega2)
}

/// Solution of `c'' + d c' + w2 c = 0` with `c(0) = 1`, `c'(0) = 0`.
pub fn damped_oscillator(d: f64, w2: f64, t: f64) -> f64 {
    let beta = 0.5 * d;
    let disc = beta * beta - w2;
    if disc.abs() <= 1e-14 * w2.max(1.0) {
        (-beta * t).exp() * (1.0 + beta * t)
    } else if disc < 0.0 {
        let wd = (-disc).sqrt();
        (-beta * t).exp() * ((wd * t).cos() + beta / wd * (wd * t).sin())
    } else {
        let s = disc.sqrt();
        let (r1, r2) = (-beta + s, -beta - s);
        (r2 * (r1 * t).exp() - r1 * (r2 * t).exp()) / (r2 - r1)
    }
}

fn linear_wave_spec(grid: &SpatialGrid, horizon: f64, dissipation: DissipationSpec, name: &str) -> ProblemSpec {
    let (mode, _) = first_mode(grid);
    ProblemSpec {
        name: name.into(),
        energy: EnergySpec::quadratic(laplacian(grid)),
        dissipation,
        perturbation: PerturbationSpec::zero(),
        force: None,
        horizon,
        u0: mode,
        v0: grid.zeros(),
        grid: grid.clone(),
    }
}

/// `Psi = (nu/2)|v|_h^2` on the first eigenmode.
pub fn build_linear_wave(nu: f64, grid: &SpatialGrid, horizon: f64) -> Result<(ProblemSpec, ExactSolution)> {
    nonnegative("nu", nu)?;
    let diss = DissipationSpec::uniform(grid, DissipationKind::Separable, 0.0, nu, 2.0, 0.0);
    let spec = linear_wave_spec(grid, horizon, diss, "linear_wave");
    spec.check()?;
    let (mode, w2) = first_mode(grid);
    Ok((spec, Arc::new(move |t| mode.scale(damped_oscillator(nu, w2, t)))))
}

/// `Psi = (nu/2)|Dv|_h^2` on the first eigenmode.
pub fn build_linear_wave_gradient(nu: f64, grid: &SpatialGrid, horizon: f64) -> Result<(ProblemSpec, ExactSolution)> {
    nonnegative("nu", nu)?;
    let diss = DissipationSpec::uniform(grid, DissipationKind::GradComposite, 0.0, nu, 2.0, 0.0);
    let spec = linear_wave_spec(grid, horizon, diss, "linear_wave_gradient");
    spec.check()?;
    let (mode, w2) = first_mode(grid);
    Ok((spec, Arc::new(move |t| mode.scale(damped_oscillator(nu * w2, w2, t)))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_has_discrete_first_eigenpair() {
        let grid = SpatialGrid::uniform(17, 1.0, BoundaryCondition::Dirichlet0).unwrap();
        let (mode, w2) = first_mode(&grid);
        let k = laplacian(&grid);
        let km = k.apply(&mode);
        for (a, b) in km.iter().zip(mode.iter()) {
            assert!((a - w2 * b).abs() < 1e-9);
        }
        assert!((k.min_eigenvalue() - w2).abs() < 1e-9);
    }

    #[test]
    fn one_node_laplacian_energy() {
        // h = 0.5 with one unknown: K = 2 / h^2
        let grid = SpatialGrid::new(3, 0.5, BoundaryCondition::Dirichlet0).unwrap();
        let k = laplacian(&grid);
        assert_eq!(k.get(0, 0), 8.0);
        let e = EnergySpec::quadratic(k);
        assert!((e.quadratic_value(&grid, &[1.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bilaplacian_quadratic_form_matches_stencil() {
        let grid = SpatialGrid::uniform(9, 1.0, BoundaryCondition::Dirichlet0Clamped).unwrap();
        let a = clamped_bilaplacian(&grid);
        assert!(a.antisymmetry() == 0.0);
        assert!(a.min_eigenvalue() > 0.0);
        let u: Vec<f64> = (0..7).map(|i| ((i + 1) as f64 * 0.7).sin()).collect();
        let h = grid.h();
        let mut nodes = [0.0; 9];
        nodes[1..8].copy_from_slice(&u);
        let mut direct = 0.0;
        for j in 0..9 {
            let left = if j == 0 { nodes[1] } else { nodes[j - 1] };
            let right = if j == 8 { nodes[7] } else { nodes[j + 1] };
            let s = (left - 2.0 * nodes[j] + right) / (h * h);
            let w = if j == 0 || j == 8 { 0.5 } else { 1.0 };
            direct += w * s * s;
        }
        let quad: f64 = a.apply(&u).iter().zip(&u).map(|(x, y)| x * y).sum();
        assert!((quad - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn oscillator_branches() {
        let two_pi = 2.0 * PI;
        assert!((damped_oscillator(0.0, 4.0, two_pi / 2.0) - 1.0).abs() < 1e-12);
        // critical and overdamped branches satisfy the ODE
        for (d, w2) in [(4.0, 4.0), (10.0, 4.0), (1.0, 9.0)] {
            let c = |t: f64| damped_oscillator(d, w2, t);
            let t = 0.4;
            let e = 1e-4;
            let c1 = (c(t + e) - c(t - e)) / (2.0 * e);
            let c2 = (c(t + e) - 2.0 * c(t) + c(t - e)) / (e * e);
            assert!((c2 + d * c1 + w2 * c(t)).abs() < 1e-5);
            assert_eq!(c(0.0), 1.0);
        }
    }

    #[test]
    fn builders_reject_bad_parameters() {
        assert!(build_p1(&P1Params { mu: 0.0, ..Default::default() }).is_err());
        assert!(build_p2(&P2Params { p: 2.5, ..Default::default() }).is_err());
        assert!(build_p3(&P3Params { q: 1.5, ..Default::default() }).is_err());
        assert!(build_linear_wave(-1.0, &p3_grid(9).unwrap(), 1.0).is_err());
    }

    #[test]
    fn p3_step_bound() {
        let spec = build_p3(&P3Params::default()).unwrap();
        assert_eq!(spec.tau_max(), 0.125);
    }
}
