//! Scalar dissipation potentials `a|s| + (g/q)|s|^q + (nu/2)s^2`, their
//! proximal maps and convex conjugates.

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparablePotential {
    /// Weight of the 1-homogeneous (dry friction) part.
    pub a: f64,
    /// Weight of the q-power part.
    pub g: f64,
    pub q: f64,
    /// Extra quadratic weight; lets gradient viscosity ride along with any `q`.
    pub nu: f64,
}

impl SeparablePotential {
    /// `a|s| + (g/q)|s|^q`; requires `a >= 0`, `g > 0`, `q > 1`.
    pub fn new(a: f64, g: f64, q: f64) -> Result<Self> {
        let pot = Self { a, g, q, nu: 0.0 };
        pot.validate()?;
        if g <= 0.0 {
            return Err(Error::config(format!("power weight g must be positive, got {g}")));
        }
        Ok(pot)
    }

    /// Adds `(nu/2)s^2`. With `nu > 0` the power weight may be zero.
    pub fn with_viscosity(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    /// Unchecked constructor used on hot paths where the coefficients come from a
    /// validated dissipation spec.
    pub(crate) fn raw(a: f64, g: f64, q: f64, nu: f64) -> Self {
        Self { a, g, q, nu }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a.is_finite()
            && self.g.is_finite()
            && self.nu.is_finite()
            && self.q.is_finite()
            && self.a >= 0.0
            && self.g >= 0.0
            && self.nu >= 0.0
            && self.q > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid potential {self:?}")))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.g == 0.0 && self.nu == 0.0
    }

    pub fn value(&self, s: f64) -> f64 {
        let x = s.abs();
        self.a * x + self.g / self.q * x.powf(self.q) + 0.5 * self.nu * x * x
    }

    /// Derivative of the smooth part on `x > 0`.
    fn smooth_slope(&self, x: f64) -> f64 {
        self.g * x.powf(self.q - 1.0) + self.nu * x
    }

    fn smooth_curvature(&self, x: f64) -> f64 {
        self.g * (self.q - 1.0) * x.powf(self.q - 2.0) + self.nu
    }

    /// Upper bound on the curvature of the smooth part, if bounded.
    pub fn max_curvature(&self) -> Option<f64> {
        if self.g == 0.0 || self.q == 2.0 {
            Some(self.g + self.nu)
        } else {
            None
        }
    }

    /// Derivative of `prox(gamma, .)` at `s`; zero inside the dead zone.
    pub(crate) fn prox_derivative(&self, gamma: f64, s: f64) -> f64 {
        if s.abs() <= gamma * self.a {
            return 0.0;
        }
        if self.g == 0.0 && self.nu == 0.0 {
            return 1.0;
        }
        let x = self.prox(gamma, s).abs();
        1.0 / (1.0 + gamma * self.smooth_curvature(x))
    }

    /// `argmin_x (x - s)^2 / (2 gamma) + value(x)`.
    pub fn prox(&self, gamma: f64, s: f64) -> f64 {
        let m = s.abs() - gamma * self.a;
        if m <= 0.0 {
            return 0.0;
        }
        if self.g == 0.0 && self.nu == 0.0 {
            return m.copysign(s);
        }
        if self.q == 2.0 || self.g == 0.0 {
            return (m / (1.0 + gamma * (self.g + self.nu))).copysign(s);
        }
        // x + gamma * slope(x) = m on (0, m], increasing in x
        let x = monotone_root(
            |x| x + gamma * self.smooth_slope(x) - m,
            |x| 1.0 + gamma * self.smooth_curvature(x),
            0.0,
            m,
        );
        x.copysign(s)
    }

    /// Convex conjugate `sup_s (xi s - value(s))`.
    pub fn conjugate(&self, xi: f64) -> f64 {
        let m = xi.abs() - self.a;
        if m <= 0.0 {
            return 0.0;
        }
        if self.g == 0.0 && self.nu == 0.0 {
            return f64::INFINITY;
        }
        if self.g == 0.0 {
            return m * m / (2.0 * self.nu);
        }
        if self.q == 2.0 {
            return m * m / (2.0 * (self.g + self.nu));
        }
        if self.nu == 0.0 {
            let qs = self.q / (self.q - 1.0);
            return self.g.powf(1.0 - qs) / qs * m.powf(qs);
        }
        // maximizer solves slope(s) = m
        let hi = (m / self.g).powf(1.0 / (self.q - 1.0)).min(m / self.nu);
        let s = monotone_root(|x| self.smooth_slope(x) - m, |x| self.smooth_curvature(x), 0.0, hi);
        m * s - self.g / self.q * s.powf(self.q) - 0.5 * self.nu * s * s
    }

    /// Fenchel-Young residual `value(s) + conjugate(xi) - xi s` (zero potential: 0,
    /// the mismatch of `xi` against `{0}` is tracked by the caller).
    pub fn fy_residual(&self, s: f64, xi: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        self.value(s) + self.conjugate(xi) - xi * s
    }

    /// Distance from `xi` to the subdifferential at `s`.
    pub fn subgradient_distance(&self, s: f64, xi: f64) -> f64 {
        if s == 0.0 {
            (xi.abs() - self.a).max(0.0)
        } else {
            let slope = (self.a + self.smooth_slope(s.abs())).copysign(s);
            (xi - slope).abs()
        }
    }
}

/// Root of an increasing function on `[lo, hi]` with `f(lo) <= 0 <= f(hi)`:
/// Newton steps, falling back to bisection whenever a step leaves the bracket.
fn monotone_root(f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let mut x = hi;
    for _ in 0..ROOT_MAX_ITER {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let mut next = x - fx / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= ROOT_TOL * next.abs().max(f64::MIN_POSITIVE) || hi - lo <= ROOT_TOL * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Proximal map of a separable potential; rejects non-finite arguments.
pub fn prox_separable(pot: &SeparablePotential, gamma: f64, s: f64) -> Result<f64> {
    if !s.is_finite() || !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::eval(format!("prox argument s = {s}, gamma = {gamma}")));
    }
    Ok(pot.prox(gamma, s))
}

/// Closed-form conjugate `(g^{1-q*}/q*) max(|xi| - a, 0)^{q*}` (plus the
/// viscous generalization).
pub fn conj_separable(pot: &SeparablePotential, xi: f64) -> f64 {
    pot.conjugate(xi)
}

/// `psi(v) + psi*(xi) - <xi, v>`; nonnegative, zero exactly on subgradient pairs.
pub fn fenchel_young_gap(psi_val: f64, conj_val: f64, pairing: f64) -> f64 {
    psi_val + conj_val - pairing
}

/// Grid-search lower bound of the conjugate of `v -> h * sum psi(v_i)` at `xi`,
/// taken coordinatewise over `[-search_box, search_box]` with `steps` cells.
/// A test oracle for separable cases only.
pub fn conjugate_numeric(
    psi: impl Fn(f64) -> f64,
    grid: &SpatialGrid,
    xi: &[f64],
    search_box: f64,
    steps: usize,
) -> f64 {
    let ds = 2.0 * search_box / steps as f64;
    let per_node = |x: f64| {
        (0..=steps)
            .map(|k| {
                let s = -search_box + k as f64 * ds;
                x * s - psi(s)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    grid.h() * xi.iter().map(|&x| per_node(x)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition;

    /// Brute-force minimizer over `[-5, 5]` at resolution 1e-6, done as a coarse
    /// sweep followed by a fine sweep around the coarse winner.
    fn grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let sweep = |lo: f64, hi: f64, step: f64| {
            let n = ((hi - lo) / step).round() as usize;
            (0..=n)
                .map(|k| lo + k as f64 * step)
                .map(|x| (x, f(x)))
                .fold((lo, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
                .0
        };
        let c = sweep(lo, hi, 1e-3);
        sweep(c - 2e-3, c + 2e-3, 1e-6)
    }

    #[test]
    fn prox_examples() {
        let pot = SeparablePotential::new(1.0, 1.0, 2.0).unwrap();
        let obj = |s: f64| move |x: f64| (x - s).powi(2) / 2.0 + pot.value(x);
        let oracle = grid_argmin(obj(3.0), -5.0, 5.0);
        assert!((oracle - 1.0).abs() < 2e-6);
        assert!((prox_separable(&pot, 1.0, 3.0).unwrap() - 1.0).abs() < 1e-12);
        let oracle = grid_argmin(obj(0.5), -5.0, 5.0);
        assert!(oracle.abs() < 2e-6);
        assert_eq!(prox_separable(&pot, 1.0, 0.5).unwrap(), 0.0);
        let pot3 = SeparablePotential::new(0.3, 2.0, 3.5).unwrap();
        assert_eq!(pot3.prox(0.7, 0.0), 0.0);
        assert!(prox_separable(&pot, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn general_q_prox_satisfies_stationarity() {
        let pot = SeparablePotential::new(0.5, 2.0, 1.5).unwrap();
        let gamma = 0.8;
        let s = 2.3;
        let x = pot.prox(gamma, s);
        let residual = (x - s) / gamma + pot.a + pot.g * x.powf(pot.q - 1.0);
        assert!(residual.abs() < 1e-10, "{residual}");
    }

    #[test]
    fn conjugate_examples() {
        let pot = SeparablePotential::new(1.0, 1.0, 2.0).unwrap();
        assert!((conj_separable(&pot, 3.0) - 2.0).abs() < 1e-14);
        assert_eq!(conj_separable(&pot, 1.0), 0.0);
        assert_eq!(conj_separable(&pot, 0.0), 0.0);
    }

    #[test]
    fn numeric_conjugate_examples() {
        let grid = SpatialGrid::new(3, 1.0, BoundaryCondition::Dirichlet0).unwrap();
        let pot = SeparablePotential::new(1.0, 1.0, 2.0).unwrap();
        let v = conjugate_numeric(|s| pot.value(s), &grid, &[3.0], 5.0, 1_000_000);
        assert!((v - 2.0).abs() < 1e-5);
        let z = conjugate_numeric(|s| pot.value(s), &grid, &[0.0], 5.0, 1_000_000);
        assert!(z.abs() < 1e-9);
        let pot = SeparablePotential::new(0.5, 2.0, 3.0).unwrap();
        let numeric = conjugate_numeric(|s| pot.value(s), &grid, &[2.0], 5.0, 1_000_000);
        let closed = 2f64.powf(1.0 - 1.5) / 1.5 * 1.5f64.powf(1.5);
        assert!((numeric - closed).abs() < 1e-4);
        assert!((conj_separable(&pot, 2.0) - closed).abs() < 1e-13);
    }

    #[test]
    fn viscous_conjugate_matches_numeric_sup() {
        let grid = SpatialGrid::new(3, 1.0, BoundaryCondition::Dirichlet0).unwrap();
        let pot = SeparablePotential::new(0.2, 0.7, 3.0).unwrap().with_viscosity(0.5);
        let numeric = conjugate_numeric(|s| pot.value(s), &grid, &[1.7], 4.0, 400_000);
        assert!((numeric - pot.conjugate(1.7)).abs() < 1e-8);
    }

    #[test]
    fn fenchel_young_examples() {
        assert_eq!(fenchel_young_gap(1.5, 0.5, 2.0), 0.0);
        assert_eq!(fenchel_young_gap(0.0, 0.0, 0.0), 0.0);
        assert_eq!(fenchel_young_gap(1.5, 0.0, 0.0), 1.5);
        let pot = SeparablePotential::new(1.0, 1.0, 2.0).unwrap();
        assert_eq!(pot.value(1.0), 1.5);
        assert_eq!(pot.conjugate(2.0), 0.5);
    }

    #[test]
    fn moreau_decomposition_for_quadratic_part() {
        // prox_{gamma f}(s) + gamma * prox_{f*/gamma}(s / gamma) = s
        let pot = SeparablePotential::new(0.4, 1.3, 2.0).unwrap();
        let gamma = 0.6;
        for k in -20..=20 {
            let s = k as f64 * 0.37;
            let p = pot.prox(gamma, s);
            // prox of f*/gamma at s/gamma: argmin_y f*(y)/gamma + (y - s/gamma)^2/2
            let y = {
                let target = s / gamma;
                let obj = |y: f64| pot.conjugate(y) / gamma + 0.5 * (y - target).powi(2);
                grid_argmin(obj, -target.abs() - 5.0, target.abs() + 5.0)
            };
            assert!((p + gamma * y - s).abs() < 1e-5, "s = {s}");
        }
    }
}
