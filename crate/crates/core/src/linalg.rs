//! Banded symmetric matrices with an LDLᵀ factorization that also reports
//! inertia, and a complex tridiagonal solver for the time stepper.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Symmetric matrix with lower bandwidth `kd`, stored row-wise as the
/// diagonals `(i, i-d)` for `d = 0..=kd`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBandMatrix {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self { n, kd, data: vec![0.0; n * (kd + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.kd, "entry ({i},{j}) outside band {}", self.kd);
        i * (self.kd + 1) + (i - j)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.kd {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Adds `v` to entries `(i, j)` and `(j, i)` (once when `i == j`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let (n, kd) = (self.n, self.kd);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let row = &self.data[i * (kd + 1)..(i + 1) * (kd + 1)];
            y[i] += row[0] * x[i];
            for d in 1..=kd.min(i) {
                let a = row[d];
                y[i] += a * x[i - d];
                y[i - d] += a * x[i];
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self + s * other`; bandwidths must agree.
    pub fn add_scaled(&self, s: f64, other: &SymBandMatrix) -> SymBandMatrix {
        assert_eq!((self.n, self.kd), (other.n, other.kd));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        SymBandMatrix { n: self.n, kd: self.kd, data }
    }

    pub fn max_abs_diff(&self, other: &SymBandMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// LDLᵀ without pivoting. Fails on a pivot that is zero relative to the
    /// magnitude of the matrix.
    pub fn ldlt(&self) -> Result<Ldlt> {
        let (n, kd) = (self.n, self.kd);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut l = self.data.clone();
        let mut d = vec![0.0; n];
        let w = kd + 1;
        for j in 0..n {
            // Diagonal pivot.
            let mut djj = l[j * w];
            for k in j.saturating_sub(kd)..j {
                let ljk = l[j * w + (j - k)];
                djj -= ljk * ljk * d[k];
            }
            if !(djj.abs() > 1e-14 * scale) || !djj.is_finite() {
                return Err(Error::FactorizationSingular { sigma: f64::NAN });
            }
            d[j] = djj;
            for i in j + 1..(j + kd + 1).min(n) {
                let mut a = l[i * w + (i - j)];
                for k in i.saturating_sub(kd)..j {
                    a -= l[i * w + (i - k)] * l[j * w + (j - k)] * d[k];
                }
                l[i * w + (i - j)] = a / djj;
            }
        }
        Ok(Ldlt { n, kd, l, d })
    }
}

/// Factor `L D Lᵀ` of a [`SymBandMatrix`].
#[derive(Debug, Clone)]
pub struct Ldlt {
    n: usize,
    kd: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldlt {
    /// Number of negative pivots, equal to the number of negative
    /// eigenvalues of the factored matrix.
    pub fn negative_count(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kd, w) = (self.n, self.kd, self.kd + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(kd)..i {
                s -= self.l[i * w + (i - k)] * b[k];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for r in i + 1..(i + kd + 1).min(n) {
                s -= self.l[r * w + (r - i)] * b[r];
            }
            b[i] = s;
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Solves a complex tridiagonal system with constant off-diagonals `off`
/// (both sides) and diagonal `diag` by the Thomas algorithm.
pub fn solve_tridiagonal_const_off(diag: &[Complex64], off: Complex64, rhs: &mut [Complex64], work: &mut Vec<Complex64>) {
    let n = diag.len();
    work.clear();
    work.resize(n, Complex64::new(0.0, 0.0));
    if n == 0 {
        return;
    }
    let mut denom = diag[0];
    work[0] = off / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - off * work[i - 1];
        work[i] = off / denom;
        rhs[i] = (rhs[i] - off * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= work[i] * next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_like(n: usize, kd: usize, shift: f64) -> SymBandMatrix {
        let mut a = SymBandMatrix::zeros(n, kd);
        for i in 0..n {
            a.add(i, i, 2.0 * kd as f64 + shift + (i as f64 * 0.37).sin());
            for d in 1..=kd.min(i) {
                a.add(i, i - d, -1.0 / d as f64);
            }
        }
        a
    }

    #[test]
    fn ldlt_solves_against_dense() {
        let a = laplacian_like(40, 2, 0.5);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).cos()).collect();
        let x = a.ldlt().unwrap().solve(&b);
        let r = a.apply(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_matches_dense_eigenvalues() {
        let a = laplacian_like(30, 2, -3.0);
        let eig = nalgebra::SymmetricEigen::new(a.to_dense());
        let neg = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
        assert_eq!(a.ldlt().unwrap().negative_count(), neg);
        assert!(neg > 0);
    }

    #[test]
    fn singular_pivot_reported() {
        let a = SymBandMatrix::zeros(4, 1);
        assert!(matches!(a.ldlt(), Err(Error::FactorizationSingular { .. })));
    }

    #[test]
    fn complex_tridiagonal() {
        let n = 25;
        let diag: Vec<Complex64> = (0..n).map(|i| Complex64::new(3.0, 0.1 * i as f64)).collect();
        let off = Complex64::new(-1.0, 0.5);
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, -(i as f64).sqrt())).collect();
        let mut b: Vec<Complex64> = (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += off * x[i - 1];
                }
                if i + 1 < n {
                    s += off * x[i + 1];
                }
                s
            })
            .collect();
        let mut work = Vec::new();
        solve_tridiagonal_const_off(&diag, off, &mut b, &mut work);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).norm() < 1e-12);
        }
    }
}
