//! Uniform grids on a truncated line, two-component fields, and the shared
//! quadrature and difference stencils.
//!
//! Every functional in the crate integrates with the composite trapezoid rule
//! and measures gradients with the cell difference `(f[i+1] - f[i]) / h`.
//! Those two choices make the discrete energy's Euler-Lagrange operator the
//! standard three-point Laplacian, which is what the profile solver, the
//! linearized operators and the time stepper all use.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `x_i = -L + i h`, `h = 2L / (n - 1)`, with `n` odd so that
/// `x = 0` is a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(rename = "L")]
    half_width: f64,
    n: usize,
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Invalid(format!("L must be positive (got {half_width})")));
        }
        if n < 3 {
            return Err(Error::Invalid(format!("n must be at least 3 (got {n})")));
        }
        if n % 2 == 0 {
            return Err(Error::Invalid(format!("n must be odd (got {n})")));
        }
        Ok(Self { half_width, n })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    /// Index of the node at `x = 0`.
    #[inline]
    pub fn mid(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Node coordinate; the endpoints and the midpoint are exact.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        let m = self.mid();
        if i == 0 {
            -self.half_width
        } else if i == self.n - 1 {
            self.half_width
        } else if i >= m {
            (i - m) as f64 * self.h()
        } else {
            -((m - i) as f64) * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Mirror index `i -> n-1-i` (the reflection `x -> -x`).
    #[inline]
    pub fn mirror(&self, i: usize) -> usize {
        self.n - 1 - i
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    /// Number of cells between the midpoint and the node nearest to `r`
    /// (`r >= 0`), clamped to the grid.
    pub fn snap_offset(&self, r: f64) -> usize {
        let k = (r.abs() / self.h()).round() as usize;
        k.min(self.mid())
    }

    /// `r` snapped to the nearest node.
    pub fn snap(&self, r: f64) -> f64 {
        self.x(self.mid() + self.snap_offset(r))
    }

    /// Closed index range `[-R, R]` after snapping.
    pub fn inner(&self, r: f64) -> Segment {
        let k = self.snap_offset(r);
        Segment { start: self.mid() - k, end: self.mid() + k }
    }

    /// The two outer ranges `[-L, -R]` and `[R, L]` after snapping.
    pub fn outer(&self, r: f64) -> [Segment; 2] {
        let k = self.snap_offset(r);
        [
            Segment { start: 0, end: self.mid() - k },
            Segment { start: self.mid() + k, end: self.n - 1 },
        ]
    }

    pub fn full(&self) -> Segment {
        Segment { start: 0, end: self.n - 1 }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected: self.n, got: len })
        }
    }

    /// Sample a function at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.x(i))).collect()
    }
}

/// Closed range of node indices `start..=end`; the trapezoid rule on it
/// gives half weight to both end nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    /// Trapezoid weight of node `i` on this segment (zero outside).
    #[inline]
    pub fn weight(&self, i: usize, h: f64) -> f64 {
        if !self.contains(i) || self.start == self.end {
            0.0
        } else if i == self.start || i == self.end {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoid rule of `f(i)` over the segment.
    pub fn integrate(&self, h: f64, f: impl Fn(usize) -> f64) -> f64 {
        if self.start == self.end {
            return 0.0;
        }
        let interior: f64 = (self.start + 1..self.end).map(&f).sum();
        h * (interior + 0.5 * (f(self.start) + f(self.end)))
    }

    /// Sum of `g(i)` over the cells `[i, i+1]` inside the segment.
    pub fn cells(&self, g: impl Fn(usize) -> f64) -> f64 {
        (self.start..self.end).map(g).sum()
    }
}

/// A real two-component grid function, e.g. the real or imaginary part of a
/// perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPair {
    pub grid: Grid,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
}

impl RealPair {
    pub fn new(grid: Grid, f1: Vec<f64>, f2: Vec<f64>) -> Result<Self> {
        grid.check_len(f1.len())?;
        grid.check_len(f2.len())?;
        Ok(Self { grid, f1, f2 })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, f1: vec![0.0; grid.len()], f2: vec![0.0; grid.len()] }
    }

    pub fn component(&self, j: usize) -> &[f64] {
        match j {
            0 => &self.f1,
            1 => &self.f2,
            _ => panic!("component index {j} out of range"),
        }
    }

    /// Only component `j` kept, the other zeroed.
    pub fn project(&self, j: usize) -> RealPair {
        let mut out = RealPair::zeros(self.grid);
        match j {
            0 => out.f1.clone_from(&self.f1),
            _ => out.f2.clone_from(&self.f2),
        }
        out
    }

    pub fn scaled(&self, s: f64) -> RealPair {
        RealPair {
            grid: self.grid,
            f1: self.f1.iter().map(|v| s * v).collect(),
            f2: self.f2.iter().map(|v| s * v).collect(),
        }
    }

    pub fn to_complex(&self) -> ComplexPair {
        ComplexPair {
            grid: self.grid,
            psi1: self.f1.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            psi2: self.f2.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// A complex two-component field `(psi1, psi2)`, a state of the coupled
/// system.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPair {
    pub grid: Grid,
    pub psi1: Vec<Complex64>,
    pub psi2: Vec<Complex64>,
}

impl ComplexPair {
    pub fn new(grid: Grid, psi1: Vec<Complex64>, psi2: Vec<Complex64>) -> Result<Self> {
        grid.check_len(psi1.len())?;
        grid.check_len(psi2.len())?;
        Ok(Self { grid, psi1, psi2 })
    }

    pub fn zeros(grid: Grid) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { grid, psi1: z.clone(), psi2: z }
    }

    /// Constant state `(c1, c2)` on every node.
    pub fn constant(grid: Grid, c1: Complex64, c2: Complex64) -> Self {
        Self { grid, psi1: vec![c1; grid.len()], psi2: vec![c2; grid.len()] }
    }

    pub fn component(&self, j: usize) -> &[Complex64] {
        match j {
            0 => &self.psi1,
            1 => &self.psi2,
            _ => panic!("component index {j} out of range"),
        }
    }

    pub fn component_mut(&mut self, j: usize) -> &mut Vec<Complex64> {
        match j {
            0 => &mut self.psi1,
            1 => &mut self.psi2,
            _ => panic!("component index {j} out of range"),
        }
    }

    pub fn real_part(&self) -> RealPair {
        RealPair {
            grid: self.grid,
            f1: self.psi1.iter().map(|z| z.re).collect(),
            f2: self.psi2.iter().map(|z| z.re).collect(),
        }
    }

    pub fn imag_part(&self) -> RealPair {
        RealPair {
            grid: self.grid,
            f1: self.psi1.iter().map(|z| z.im).collect(),
            f2: self.psi2.iter().map(|z| z.im).collect(),
        }
    }

    /// `V + i W` from real and imaginary parts on the same grid.
    pub fn from_parts(re: &RealPair, im: &RealPair) -> Result<Self> {
        if re.grid != im.grid {
            return Err(Error::GridMismatch);
        }
        let zip = |a: &[f64], b: &[f64]| -> Vec<Complex64> {
            a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect()
        };
        Ok(Self { grid: re.grid, psi1: zip(&re.f1, &im.f1), psi2: zip(&re.f2, &im.f2) })
    }

    /// Independent phase factors per component: `(c1 psi1, c2 psi2)`.
    pub fn rotated(&self, c1: Complex64, c2: Complex64) -> ComplexPair {
        ComplexPair {
            grid: self.grid,
            psi1: self.psi1.iter().map(|z| c1 * z).collect(),
            psi2: self.psi2.iter().map(|z| c2 * z).collect(),
        }
    }

    pub fn sub(&self, other: &ComplexPair) -> Result<ComplexPair> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let d = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Ok(ComplexPair { grid: self.grid, psi1: d(&self.psi1, &other.psi1), psi2: d(&self.psi2, &other.psi2) })
    }

    pub fn add_scaled(&self, s: f64, other: &ComplexPair) -> Result<ComplexPair> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let d = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x + s * y).collect();
        Ok(ComplexPair { grid: self.grid, psi1: d(&self.psi1, &other.psi1), psi2: d(&self.psi2, &other.psi2) })
    }

    pub fn max_abs_diff(&self, other: &ComplexPair) -> f64 {
        self.psi1
            .iter()
            .zip(&other.psi1)
            .chain(self.psi2.iter().zip(&other.psi2))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.psi1.iter().chain(&self.psi2).all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// First derivative: central differences inside, second-order one-sided
/// differences at both endpoints.
pub fn diff1(f: &[f64], grid: &Grid) -> Result<Vec<f64>> {
    grid.check_len(f.len())?;
    let n = f.len();
    let h = grid.h();
    let mut d = vec![0.0; n];
    if n == 3 {
        d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
        d[1] = (f[2] - f[0]) / (2.0 * h);
        d[2] = (3.0 * f[2] - 4.0 * f[1] + f[0]) / (2.0 * h);
        return Ok(d);
    }
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    Ok(d)
}

/// `diff1` applied to real and imaginary parts.
pub fn diff1_complex(f: &[Complex64], grid: &Grid) -> Result<Vec<Complex64>> {
    let re: Vec<f64> = f.iter().map(|z| z.re).collect();
    let im: Vec<f64> = f.iter().map(|z| z.im).collect();
    let (dr, di) = (diff1(&re, grid)?, diff1(&im, grid)?);
    Ok(dr.into_iter().zip(di).map(|(a, b)| Complex64::new(a, b)).collect())
}

/// Composite trapezoid rule over the whole grid.
pub fn quad(f: &[f64], grid: &Grid) -> Result<f64> {
    grid.check_len(f.len())?;
    Ok(grid.full().integrate(grid.h(), |i| f[i]))
}

/// Discrete `int f' conj(g)' dx` with cell differences, restricted to a
/// segment.
pub fn gradient_form_on(f: &[Complex64], g: &[Complex64], h: f64, seg: Segment) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in seg.start..seg.end {
        acc += (f[i + 1] - f[i]) * (g[i + 1] - g[i]).conj();
    }
    acc / h
}

/// Real version of [`gradient_form_on`].
pub fn gradient_form_real_on(f: &[f64], g: &[f64], h: f64, seg: Segment) -> f64 {
    seg.cells(|i| (f[i + 1] - f[i]) * (g[i + 1] - g[i])) / h
}

/// Natural cubic spline through the node values of a grid function.
///
/// Evaluation at a node returns the stored value exactly.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    grid: Grid,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(grid: Grid, y: &[f64]) -> Result<Self> {
        grid.check_len(y.len())?;
        let n = y.len();
        let h = grid.h();
        // Second derivatives: M_{i-1} + 4 M_i + M_{i+1} = 6 (y_{i+1} - 2 y_i + y_{i-1}) / h^2
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for j in 0..k {
                let i = j + 1;
                let rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
                if j == 0 {
                    c[j] = 1.0 / 4.0;
                    d[j] = rhs / 4.0;
                } else {
                    let denom = 4.0 - c[j - 1];
                    c[j] = 1.0 / denom;
                    d[j] = (rhs - d[j - 1]) / denom;
                }
            }
            for j in (0..k).rev() {
                let next = if j + 1 < k { m[j + 2] } else { 0.0 };
                m[j + 1] = d[j] - c[j] * next;
            }
        }
        Ok(Self { grid, y: y.to_vec(), m })
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.grid.h();
        let mut s = (x + self.grid.half_width()) / h;
        if (s - s.round()).abs() < 1e-9 {
            s = s.round();
        }
        let k = (s.floor().max(0.0) as usize).min(self.y.len() - 2);
        (k, s - k as f64)
    }

    /// Value and first derivative at `x`; `x` must lie in `[-L, L]`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let (k, t) = self.locate(x);
        let h = self.grid.h();
        let (y0, y1, m0, m1) = (self.y[k], self.y[k + 1], self.m[k], self.m[k + 1]);
        if t == 0.0 {
            let d = (y1 - y0) / h + h / 6.0 * (-2.0 * m0 - m1);
            return (y0, d);
        }
        let u = 1.0 - t;
        let v = u * y0 + t * y1 + h * h / 6.0 * ((u * u * u - u) * m0 + (t * t * t - t) * m1);
        let d = (y1 - y0) / h + h / 6.0 * ((1.0 - 3.0 * u * u) * m0 + (3.0 * t * t - 1.0) * m1);
        (v, d)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_nodes() {
        let g = Grid::new(1.0, 3).unwrap();
        assert_eq!(g.nodes(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.h(), 1.0);
    }

    #[test]
    fn spacing() {
        let g = Grid::new(30.0, 3001).unwrap();
        assert!((g.h() - 0.02).abs() < 1e-15);
        assert_eq!(g.x(0), -30.0);
        assert_eq!(g.x(3000), 30.0);
        assert_eq!(g.x(1500), 0.0);
        let x = g.nodes();
        assert!(x.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_grids() {
        let e = Grid::new(30.0, 3000).unwrap_err();
        assert!(e.to_string().contains("n must be odd"));
        assert!(Grid::new(0.0, 5).is_err());
        assert!(Grid::new(-1.0, 5).is_err());
        assert!(Grid::new(1.0, 1).is_err());
    }

    #[test]
    fn symmetric_nodes_are_exact_mirrors() {
        let g = Grid::new(7.3, 1001).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.x(i), -g.x(g.mirror(i)));
        }
    }

    #[test]
    fn diff1_exact_on_linear_and_quadratic() {
        let g = Grid::new(1.0, 101).unwrap();
        let f = g.nodes();
        assert!(diff1(&f, &g).unwrap().iter().all(|d| (d - 1.0).abs() < 1e-12));
        let q: Vec<f64> = f.iter().map(|x| x * x).collect();
        let dq = diff1(&q, &g).unwrap();
        for i in 0..g.len() {
            assert!((dq[i] - 2.0 * f[i]).abs() < 1e-12, "node {i}");
        }
        let c = vec![3.5; g.len()];
        assert!(diff1(&c, &g).unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn diff1_length_mismatch() {
        let g = Grid::new(1.0, 11).unwrap();
        assert!(matches!(diff1(&[1.0; 10], &g), Err(Error::LengthMismatch { .. })));
        assert!(quad(&[1.0; 12], &g).is_err());
    }

    #[test]
    fn quad_basic() {
        let g = Grid::new(1.0, 21).unwrap();
        assert!((quad(&vec![1.0; 21], &g).unwrap() - 2.0).abs() < 1e-15);
        let odd = g.sample(|x| x * x * x - x);
        assert!(quad(&odd, &g).unwrap().abs() < 1e-13);
    }

    #[test]
    fn restricted_segments_partition_the_line() {
        let g = Grid::new(10.0, 201).unwrap();
        let f = g.sample(|x| (-x * x / 7.0).exp() + 0.1 * x);
        let total = quad(&f, &g).unwrap();
        let inner = g.inner(3.0).integrate(g.h(), |i| f[i]);
        let [a, b] = g.outer(3.0);
        let outer = a.integrate(g.h(), |i| f[i]) + b.integrate(g.h(), |i| f[i]);
        assert!((inner + outer - total).abs() < 1e-13);
        assert_eq!(g.snap(3.04), 3.0);
    }

    #[test]
    fn spline_reproduces_nodes_and_cubics() {
        let g = Grid::new(2.0, 41).unwrap();
        let y = g.sample(|x| x.sin());
        let s = CubicSpline::new(g, &y).unwrap();
        for i in 0..g.len() {
            assert_eq!(s.eval(g.x(i)), y[i]);
        }
        let (v, d) = s.eval_with_derivative(0.537);
        assert!((v - 0.537f64.sin()).abs() < 1e-5);
        assert!((d - 0.537f64.cos()).abs() < 1e-3);
    }
}
