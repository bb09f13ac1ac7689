//! Uniform 1D grids and nodal fields.
//!
//! Every operator works on interior unknowns only; boundary values are the
//! homogeneous Dirichlet zeros. The H-pairing is `<u, v>_h = h * sum(u_i v_i)`
//! and dual elements are stored as nodal vectors through that pairing.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// u = 0 at both ends.
    Dirichlet0,
    /// u = 0 and u' = 0 at both ends (fourth-order operators).
    Dirichlet0Clamped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    n_nodes: usize,
    h: f64,
    bc: BoundaryCondition,
}

impl SpatialGrid {
    pub fn new(n_nodes: usize, h: f64, bc: BoundaryCondition) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::config(format!("grid needs at least 3 nodes, got {n_nodes}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::config(format!("grid spacing must be positive, got {h}")));
        }
        Ok(Self { n_nodes, h, bc })
    }

    /// Uniform grid covering `[0, length]`.
    pub fn uniform(n_nodes: usize, length: f64, bc: BoundaryCondition) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::config(format!("grid needs at least 3 nodes, got {n_nodes}")));
        }
        Self::new(n_nodes, length / (n_nodes - 1) as f64, bc)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    /// Number of unknowns.
    pub fn interior(&self) -> usize {
        self.n_nodes - 2
    }

    /// Number of cells, i.e. entries of a discrete gradient.
    pub fn n_edges(&self) -> usize {
        self.n_nodes - 1
    }

    pub fn length(&self) -> f64 {
        self.h * (self.n_nodes - 1) as f64
    }

    /// Coordinate of interior unknown `i`.
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h
    }

    pub fn edge_midpoint(&self, e: usize) -> f64 {
        (e as f64 + 0.5) * self.h
    }

    pub fn zeros(&self) -> Field {
        Field::zeros(self.interior())
    }

    pub fn edge_zeros(&self) -> Field {
        Field::zeros(self.n_edges())
    }

    pub fn from_fn(&self, f: impl Fn(f64) -> f64) -> Field {
        Field((0..self.interior()).map(|i| f(self.x(i))).collect())
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        self.h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    pub fn q_norm(&self, u: &[f64], q: f64) -> f64 {
        (self.h * u.iter().map(|x| x.abs().powf(q)).sum::<f64>()).powf(1.0 / q)
    }

    /// Forward difference onto cells: `(Du)_e = (u_e - u_{e-1}) / h`.
    pub fn grad(&self, u: &[f64], out: &mut [f64]) {
        let n = self.interior();
        debug_assert_eq!(u.len(), n);
        debug_assert_eq!(out.len(), n + 1);
        let inv_h = 1.0 / self.h;
        let mut prev = 0.0;
        for e in 0..n {
            out[e] = (u[e] - prev) * inv_h;
            prev = u[e];
        }
        out[n] = -prev * inv_h;
    }

    pub fn grad_field(&self, u: &[f64]) -> Field {
        let mut out = self.edge_zeros();
        self.grad(u, &mut out);
        out
    }

    /// Adjoint of [`grad`](Self::grad) for the h-weighted pairings on both sides.
    pub fn grad_adjoint(&self, p: &[f64], out: &mut [f64]) {
        let n = self.interior();
        debug_assert_eq!(p.len(), n + 1);
        let inv_h = 1.0 / self.h;
        for i in 0..n {
            out[i] = (p[i] - p[i + 1]) * inv_h;
        }
    }
}

/// Real vector over grid unknowns (or over cells, for gradients and duals).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(n: usize) -> Self {
        Field(vec![0.0; n])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &[f64]) -> Field {
        Field(self.0.iter().zip(other).map(|(a, b)| a + alpha * b).collect())
    }

    pub fn sub(&self, other: &[f64]) -> Field {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, s: f64) -> Field {
        Field(self.0.iter().map(|a| a * s).collect())
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(SpatialGrid::new(2, 0.1, BoundaryCondition::Dirichlet0).is_err());
        assert!(SpatialGrid::new(5, 0.0, BoundaryCondition::Dirichlet0).is_err());
        assert!(SpatialGrid::new(5, f64::NAN, BoundaryCondition::Dirichlet0).is_err());
    }

    #[test]
    fn grad_adjoint_matches_pairing() {
        let g = SpatialGrid::uniform(9, 1.0, BoundaryCondition::Dirichlet0).unwrap();
        let u = g.from_fn(|x| (3.0 * x).sin() + x * x);
        let p = Field((0..g.n_edges()).map(|e| (e as f64 * 0.7).cos()).collect());
        let du = g.grad_field(&u);
        let mut dtp = g.zeros();
        g.grad_adjoint(&p, &mut dtp);
        let lhs = g.inner(&du, &p);
        let rhs = g.inner(&u, &dtp);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn norms_vanish_only_at_zero() {
        let g = SpatialGrid::uniform(6, 1.0, BoundaryCondition::Dirichlet0).unwrap();
        assert_eq!(g.norm(&g.zeros()), 0.0);
        let u = g.from_fn(|x| x);
        assert!(g.norm(&u) > 0.0 && g.q_norm(&u, 3.0) > 0.0);
    }
}
