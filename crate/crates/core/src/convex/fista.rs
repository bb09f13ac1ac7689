//! Accelerated proximal gradient for `min_u S(u) + scale * h * sum_i phi_i((u_i - c_i) / scale)`
//! with Lipschitz backtracking and function-value restarts.

use crate::convex::pd::{PDReport, SmoothObjective};
use crate::convex::potential::SeparablePotential;
use crate::error::{Error, Result, Unconverged};
use crate::grid::Field;

pub struct ProxGradProblem<'a> {
    pub smooth: &'a dyn SmoothObjective,
    pub nonsmooth: Vec<SeparablePotential>,
    pub offset: Vec<f64>,
    pub scale: f64,
    pub weight: f64,
    /// Tolerance on the Fenchel-Young gap, in units of `phi`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial Lipschitz estimate of `grad S` in the h-norm.
    pub lipschitz_hint: f64,
}

impl ProxGradProblem<'_> {
    fn weighted_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weight * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        let f: f64 = u
            .iter()
            .zip(&self.offset)
            .zip(&self.nonsmooth)
            .map(|((u, c), p)| p.value((u - c) / self.scale))
            .sum();
        self.smooth.value(u) + self.scale * self.weight * f
    }

    /// Fenchel-Young gap at `u` with the dual fixed to `-grad S(u)`.
    pub fn gap_at(&self, u: &[f64], eta: &mut [f64]) -> f64 {
        self.smooth.gradient(u, eta);
        eta.iter_mut().for_each(|x| *x = -*x);
        self.weight
            * u.iter()
                .zip(&self.offset)
                .zip(&self.nonsmooth)
                .zip(eta.iter())
                .map(|(((u, c), pot), xi)| pot.fy_residual((u - c) / self.scale, *xi))
                .sum::<f64>()
    }

    fn prox_step(&self, t: f64, y: &[f64], out: &mut [f64]) {
        let gamma = t / self.scale;
        for i in 0..y.len() {
            let c = self.offset[i];
            out[i] = c + self.scale * self.nonsmooth[i].prox(gamma, (y[i] - c) / self.scale);
        }
    }
}

pub fn solve_prox_grad(prob: &ProxGradProblem<'_>, init: &[f64]) -> Result<(Field, PDReport)> {
    let n = prob.smooth.dim();
    if init.len() != n || prob.nonsmooth.len() != n || prob.offset.len() != n {
        return Err(Error::config("proximal-gradient problem dimensions disagree"));
    }
    let mu = prob.smooth.strong_convexity().max(0.0);
    let mut lips = prob.lipschitz_hint.max(mu).max(f64::MIN_POSITIVE);
    let mut x = init.to_vec();
    let mut y = x.clone();
    let mut x_next = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut trial = vec![0.0; n];

    let mut gap = prob.gap_at(&x, &mut eta);
    let mut obj = prob.objective(&x);
    let mut iterations = 0;
    while gap > prob.tol && iterations < prob.max_iter {
        iterations += 1;
        prob.smooth.gradient(&y, &mut grad);
        let sy = prob.smooth.value(&y);
        loop {
            for i in 0..n {
                trial[i] = y[i] - grad[i] / lips;
            }
            prob.prox_step(1.0 / lips, &trial, &mut x_next);
            let d: Vec<f64> = x_next.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = sy + prob.weighted_dot(&grad, &d) + 0.5 * lips * prob.weighted_dot(&d, &d);
            let sx = prob.smooth.value(&x_next);
            if sx <= model + 1e-13 * sy.abs().max(1.0) {
                break;
            }
            lips *= 2.0;
            if !lips.is_finite() {
                return Err(Error::NonFiniteIterate { iterations });
            }
        }
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteIterate { iterations });
        }
        let obj_next = prob.objective(&x_next);
        let q = (mu / lips).sqrt();
        let beta = (1.0 - q) / (1.0 + q);
        if obj_next > obj {
            // restart momentum
            y.copy_from_slice(&x_next);
        } else {
            for i in 0..n {
                y[i] = x_next[i] + beta * (x_next[i] - x[i]);
            }
        }
        std::mem::swap(&mut x, &mut x_next);
        obj = obj_next;
        gap = prob.gap_at(&x, &mut eta);
        // let the estimate relax so a pessimistic early backtrack does not stick
        lips = (0.95 * lips).max(mu);
    }
    if gap > prob.tol {
        return Err(Error::MaxIterExceeded(Box::new(Unconverged {
            primal: Field(x),
            dual: Field(eta),
            iterations,
            gap,
        })));
    }
    Ok((Field(x), PDReport { iterations, gap, primal_value: obj }))
}
