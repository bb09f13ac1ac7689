//! Banded matrices and a banded Cholesky factorization.
//!
//! All operators in the models are at most pentadiagonal, so every Newton
//! solve inside the inner loops costs O(n * bw^2).

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Square matrix with `bw` sub- and super-diagonals, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), 0);
        for (i, &x) in d.iter().enumerate() {
            m.set(i, i, x);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside bandwidth {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside bandwidth {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Copy with a wider band (no-op if already wide enough).
    pub fn widened(&self, bw: usize) -> Self {
        if bw <= self.bw {
            return self.clone();
        }
        let mut out = Self::zeros(self.n, bw);
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..(i + self.bw + 1).min(self.n) {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }

    /// `self + alpha * other`, band grown as needed.
    pub fn plus_scaled(&self, alpha: f64, other: &BandMatrix) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = self.widened(other.bw);
        for i in 0..self.n {
            for j in i.saturating_sub(other.bw)..(i + other.bw + 1).min(self.n) {
                out.add(i, j, alpha * other.get(i, j));
            }
        }
        out
    }

    pub fn add_to_diagonal(&mut self, s: f64) {
        for i in 0..self.n {
            self.add(i, i, s);
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw + 1).min(self.n);
            let row = &self.data[self.idx(i, lo)..=self.idx(i, hi - 1)];
            out[i] = row.iter().zip(&x[lo..hi]).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec(x, &mut out);
        out
    }

    /// Largest entry of the antisymmetric part `(A - A^T) / 2`.
    pub fn antisymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i + 1..(i + self.bw + 1).min(self.n) {
                worst = worst.max(0.5 * (self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Symmetric part as a dense matrix.
    pub fn to_dense_symmetric(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }

    /// Smallest eigenvalue of the symmetric part.
    pub fn min_eigenvalue(&self) -> f64 {
        let eig = SymmetricEigen::new(self.to_dense_symmetric());
        eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest eigenvalue of the symmetric part.
    pub fn max_eigenvalue(&self) -> f64 {
        let eig = SymmetricEigen::new(self.to_dense_symmetric());
        eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Gershgorin upper bound on the spectrum of the symmetric part.
    pub fn gershgorin_upper(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw + 1).min(self.n);
                let off: f64 = (lo..hi)
                    .filter(|&j| j != i)
                    .map(|j| 0.5 * (self.get(i, j) + self.get(j, i)).abs())
                    .sum();
                self.get(i, i) + off
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Cholesky factor `L` of a symmetric positive-definite band matrix.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i, i-bw..=i]
    l: Vec<f64>,
}

impl BandCholesky {
    /// Factors the lower triangle of `a` (assumed symmetric).
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let n = a.dim();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        let at = |i: usize, j: usize| i * w + (j + bw - i);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = a.get(i, j);
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= l[at(i, k)] * l[at(j, k)];
                }
                if i == j {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::eval(format!(
                            "matrix not positive definite (pivot {s:.3e} at row {i})"
                        )));
                    }
                    l[at(i, i)] = s.sqrt();
                } else {
                    l[at(i, j)] = s / l[at(j, j)];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let at = |i: usize, j: usize| i * w + (j + bw - i);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[at(i, k)] * b[k];
            }
            b[i] = s / self.l[at(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[at(k, i)] * b[k];
            }
            b[i] = s / self.l[at(i, i)];
        }
    }
}
