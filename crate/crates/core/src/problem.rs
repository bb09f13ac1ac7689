//! Discretized problem model: energy, dissipation, perturbation and force.

use std::sync::Arc;

use crate::convex::SeparablePotential;
use crate::error::{Error, Result};
use crate::grid::{Field, SpatialGrid};
use crate::linalg::BandMatrix;

/// Non-quadratic energy part `E2_t`. Gradients and Hessians are Riesz
/// representations for the h-pairing.
pub trait SmoothEnergy: Send + Sync {
    fn value(&self, t: f64, u: &[f64]) -> f64;
    fn gradient(&self, t: f64, u: &[f64], out: &mut [f64]);
    fn hessian(&self, t: f64, u: &[f64]) -> BandMatrix;
    fn time_derivative(&self, _t: f64, _u: &[f64]) -> f64 {
        0.0
    }
    fn is_time_dependent(&self) -> bool {
        false
    }
}

/// Constants of `|d/dt E2_t(u)| <= c1 * (E2_t(u) + shift)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeControl {
    pub c1: f64,
    pub shift: f64,
}

impl Default for TimeControl {
    fn default() -> Self {
        Self { c1: 0.0, shift: 0.0 }
    }
}

#[derive(Clone)]
pub struct EnergySpec {
    /// Symmetric positive-definite operator of the quadratic part `1/2 <Au, u>_h`.
    pub quad_op: BandMatrix,
    pub smooth_part: Option<Arc<dyn SmoothEnergy>>,
    /// `E_t + lambda |.|_h^2` is convex.
    pub lambda_conv: f64,
    pub time_control: TimeControl,
}

impl EnergySpec {
    pub fn quadratic(quad_op: BandMatrix) -> Self {
        Self { quad_op, smooth_part: None, lambda_conv: 0.0, time_control: TimeControl::default() }
    }

    pub fn quadratic_value(&self, grid: &SpatialGrid, u: &[f64]) -> f64 {
        0.5 * grid.inner(&self.quad_op.apply(u), u)
    }

    pub fn smooth_value(&self, t: f64, u: &[f64]) -> f64 {
        self.smooth_part.as_ref().map_or(0.0, |e| e.value(t, u))
    }

    pub fn value(&self, grid: &SpatialGrid, t: f64, u: &[f64]) -> f64 {
        self.quadratic_value(grid, u) + self.smooth_value(t, u)
    }

    /// `A u + DE2_t(u)`.
    pub fn gradient(&self, t: f64, u: &[f64], out: &mut [f64]) {
        self.quad_op.matvec(u, out);
        if let Some(e) = &self.smooth_part {
            let mut g = vec![0.0; u.len()];
            e.gradient(t, u, &mut g);
            out.iter_mut().zip(&g).for_each(|(o, g)| *o += g);
        }
    }

    pub fn hessian(&self, t: f64, u: &[f64]) -> BandMatrix {
        match &self.smooth_part {
            Some(e) => self.quad_op.plus_scaled(1.0, &e.hessian(t, u)),
            None => self.quad_op.clone(),
        }
    }

    pub fn time_derivative(&self, t: f64, u: &[f64]) -> f64 {
        self.smooth_part.as_ref().map_or(0.0, |e| e.time_derivative(t, u))
    }

    pub fn is_time_dependent(&self) -> bool {
        self.smooth_part.as_ref().is_some_and(|e| e.is_time_dependent())
    }

    /// Step size below which every incremental problem has a unique minimizer
    /// (`inf` when the energy is convex).
    pub fn step_bound(&self) -> f64 {
        let l = self.lambda_conv;
        if l <= 0.0 {
            f64::INFINITY
        } else {
            // 1/(2l) alone leaves the inertia term too weak when l < 1
            (1.0 / (2.0 * l)).min(1.0 / (2.0 * l.sqrt()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DissipationKind {
    /// `h * sum_i phi_i(v_i)`
    Separable,
    /// `h * sum_e phi_e((Dv)_e)`
    GradComposite,
}

/// Per-component coefficients `a` (1-homogeneous) and `g` (q-power).
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub a: Vec<f64>,
    pub g: Vec<f64>,
}

pub type CoefficientMap = Arc<dyn Fn(&[f64]) -> Coefficients + Send + Sync>;

/// `lower * (|v|^q - 1) <= Psi_u(v) <= upper * (|v|^q + 1)` on the sampled states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthBounds {
    pub lower: f64,
    pub upper: f64,
    /// Radius of the state ball the bounds are claimed on.
    pub radius: f64,
}

impl GrowthBounds {
    /// Bounds implied by coefficient ranges on a domain of the given length.
    pub fn from_coefficients(a_max: f64, g_min: f64, g_max: f64, q: f64, visc: f64, length: f64) -> Self {
        let lower = if g_min > 0.0 {
            g_min / q + if q == 2.0 { 0.5 * visc } else { 0.0 }
        } else if q == 2.0 {
            0.5 * visc
        } else {
            0.0
        };
        let upper = (a_max + g_max / q + 0.5 * visc) * length.max(1.0);
        Self { lower, upper, radius: 2.0 }
    }
}

#[derive(Clone)]
pub struct DissipationSpec {
    pub kind: DissipationKind,
    pub q: f64,
    /// Extra `(visc/2) s^2` on every component.
    pub visc: f64,
    pub state_dep: CoefficientMap,
    pub growth: GrowthBounds,
}

impl DissipationSpec {
    /// State-independent coefficients.
    pub fn uniform(grid: &SpatialGrid, kind: DissipationKind, a: f64, g: f64, q: f64, visc: f64) -> Self {
        let n = match kind {
            DissipationKind::Separable => grid.interior(),
            DissipationKind::GradComposite => grid.n_edges(),
        };
        let coeffs = Coefficients { a: vec![a; n], g: vec![g; n] };
        Self {
            kind,
            q,
            visc,
            state_dep: Arc::new(move |_| coeffs.clone()),
            growth: GrowthBounds::from_coefficients(a, g, g, q, visc, grid.length()),
        }
    }

    pub fn n_components(&self, grid: &SpatialGrid) -> usize {
        match self.kind {
            DissipationKind::Separable => grid.interior(),
            DissipationKind::GradComposite => grid.n_edges(),
        }
    }

    pub fn potentials(&self, state: &[f64]) -> Vec<SeparablePotential> {
        let c = (self.state_dep)(state);
        c.a.iter()
            .zip(&c.g)
            .map(|(&a, &g)| SeparablePotential::raw(a, g, self.q, self.visc))
            .collect()
    }

    /// `v` or `Dv`, the argument of the scalar potentials.
    pub fn strain(&self, grid: &SpatialGrid, v: &[f64]) -> Field {
        match self.kind {
            DissipationKind::Separable => Field(v.to_vec()),
            DissipationKind::GradComposite => grid.grad_field(v),
        }
    }

    pub fn value(&self, grid: &SpatialGrid, state: &[f64], v: &[f64]) -> f64 {
        let pots = self.potentials(state);
        let s = self.strain(grid, v);
        grid.h() * s.iter().zip(&pots).map(|(s, p)| p.value(*s)).sum::<f64>()
    }

    /// `||v||_{q,h}` (separable) or `||Dv||_{q,h}` (composite).
    pub fn strain_norm(&self, grid: &SpatialGrid, v: &[f64]) -> f64 {
        grid.q_norm(&self.strain(grid, v), self.q)
    }
}

pub type PerturbationFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct PerturbationSpec {
    /// `(t, u, v) -> B(t, u, v)` as a nodal vector; `None` is the zero map.
    pub eval: Option<PerturbationFn>,
    pub growth_exponent: f64,
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        Self { eval: None, growth_exponent: 2.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.eval.is_none()
    }

    pub fn evaluate(&self, t: f64, u: &[f64], v: &[f64]) -> Field {
        match &self.eval {
            Some(b) => Field(b(t, u, v)),
            None => Field::zeros(u.len()),
        }
    }
}

pub type ForceFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Immutable problem description shared by all runs.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub grid: SpatialGrid,
    pub energy: EnergySpec,
    pub dissipation: DissipationSpec,
    pub perturbation: PerturbationSpec,
    /// External force entering through the pairing; `None` is zero.
    pub force: Option<ForceFn>,
    pub horizon: f64,
    pub u0: Field,
    pub v0: Field,
}

impl ProblemSpec {
    pub fn check(&self) -> Result<()> {
        let n = self.grid.interior();
        if self.energy.quad_op.dim() != n {
            return Err(Error::config(format!(
                "energy operator has dimension {}, grid has {n} unknowns",
                self.energy.quad_op.dim()
            )));
        }
        if self.u0.len() != n || self.v0.len() != n {
            return Err(Error::config(format!(
                "initial data have lengths {} and {}, grid has {n} unknowns",
                self.u0.len(),
                self.v0.len()
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dissipation.q > 1.0) {
            return Err(Error::config(format!("dissipation exponent must exceed 1, got {}", self.dissipation.q)));
        }
        if !(self.energy.lambda_conv >= 0.0) {
            return Err(Error::config("convexity modulus must be nonnegative"));
        }
        if !self.u0.is_finite() || !self.v0.is_finite() {
            return Err(Error::eval("initial data"));
        }
        Ok(())
    }

    /// Largest admissible time step: the unique-minimizer bound, capped at the horizon.
    pub fn tau_max(&self) -> f64 {
        self.energy.step_bound().min(self.horizon)
    }

    pub fn force_at(&self, t: f64) -> Field {
        match &self.force {
            Some(f) => Field(f(t)),
            None => self.grid.zeros(),
        }
    }

    /// No external force, no perturbation and a time-independent energy.
    pub fn is_autonomous_unforced(&self) -> bool {
        self.force.is_none() && self.perturbation.is_zero() && !self.energy.is_time_dependent()
    }
}

/// `1/2 <Au, u>_h + E2_t(u)`.
pub fn energy_total(spec: &ProblemSpec, t: f64, u: &[f64]) -> Result<f64> {
    if u.len() != spec.grid.interior() {
        return Err(Error::config("field length does not match grid"));
    }
    if !u.iter().all(|x| x.is_finite()) {
        return Err(Error::eval("energy argument"));
    }
    let e = spec.energy.value(&spec.grid, t, u);
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::eval(format!("energy at t = {t}")))
    }
}
