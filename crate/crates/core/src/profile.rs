//! Domain-wall profiles: the real heteroclinic solution `U = (u1, u2)` of
//!
//! ```text
//! -u1'' + (u1^2 + g u2^2 - 1) u1 = 0
//! -u2'' + (g u1^2 + u2^2 - 1) u2 = 0
//! ```
//!
//! with `(u1, u2) -> (0, 1)` on the left and `(1, 0)` on the right.
//!
//! The discrete problem is posed on the symmetric subspace `u2(x) = u1(-x)`.
//! Translation invariance makes the full Dirichlet Jacobian singular to
//! within `exp(-2 kappa L)`; restricted to the symmetric subspace it is
//! uniformly invertible.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_gamma, Error, Result};
use crate::grid::{diff1, ComplexPair, CubicSpline, Grid, RealPair};
use crate::linalg::SymBandMatrix;

/// Inter-component coupling `gamma > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub gamma: f64,
}

impl CouplingParams {
    pub fn new(gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(Self { gamma })
    }

    /// Decay exponent of `u1` at `-inf`.
    pub fn left_rate(&self) -> f64 {
        (self.gamma - 1.0).sqrt()
    }

    /// Decay exponent of `1 - u1` at `+inf`.
    pub fn right_rate(&self) -> f64 {
        std::f64::consts::SQRT_2
    }

    /// Slowest of the two, used as the generic decay rate.
    pub fn kappa(&self) -> f64 {
        self.left_rate().min(self.right_rate())
    }
}

/// A converged domain wall on a grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WallProfile {
    pub grid: Grid,
    pub gamma: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// Sup norm of the discrete residual over interior nodes, both equations.
    pub residual_norm: f64,
    /// `|u1(0) - u2(0)|`.
    pub midpoint_mismatch: f64,
}

impl WallProfile {
    /// Builds a profile from stored values (for example a CSV file) and
    /// recomputes its residual.
    pub fn from_values(grid: Grid, gamma: f64, u1: Vec<f64>, u2: Vec<f64>) -> Result<Self> {
        check_gamma(gamma)?;
        grid.check_len(u1.len())?;
        grid.check_len(u2.len())?;
        let residual_norm = residual_sup(&grid, gamma, &u1, &u2);
        let m = grid.mid();
        let midpoint_mismatch = (u1[m] - u2[m]).abs();
        Ok(Self { grid, gamma, u1, u2, residual_norm, midpoint_mismatch })
    }

    pub fn component(&self, j: usize) -> &[f64] {
        match j {
            0 => &self.u1,
            1 => &self.u2,
            _ => panic!("component index {j} out of range"),
        }
    }

    pub fn as_pair(&self) -> RealPair {
        RealPair { grid: self.grid, f1: self.u1.clone(), f2: self.u2.clone() }
    }

    /// The real embedding `U + 0i`.
    pub fn as_state(&self) -> ComplexPair {
        self.as_pair().to_complex()
    }

    /// `(u1', u2')` by [`diff1`].
    pub fn derivative(&self) -> RealPair {
        RealPair {
            grid: self.grid,
            f1: diff1(&self.u1, &self.grid).expect("profile length"),
            f2: diff1(&self.u2, &self.grid).expect("profile length"),
        }
    }

    /// `U1 = (u1, 0)` and `U2 = (0, u2)`.
    pub fn gauge_mode(&self, j: usize) -> RealPair {
        self.as_pair().project(j)
    }

    /// Weight `(gamma - 1)(1 - u_j^2)` of the weighted space at node `i`.
    #[inline]
    pub fn weight(&self, j: usize, i: usize) -> f64 {
        let u = self.component(j)[i];
        (self.gamma - 1.0) * (1.0 - u * u)
    }

    pub fn coupling(&self) -> CouplingParams {
        CouplingParams { gamma: self.gamma }
    }
}

/// Residual of both stationary equations at interior node `i`.
fn node_residual(grid: &Grid, gamma: f64, u1: &[f64], u2: &[f64], i: usize) -> (f64, f64) {
    let h2 = grid.h() * grid.h();
    let lap = |u: &[f64]| (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
    let (a, b) = (u1[i], u2[i]);
    (
        -lap(u1) + (a * a + gamma * b * b - 1.0) * a,
        -lap(u2) + (gamma * a * a + b * b - 1.0) * b,
    )
}

/// Sup norm of the discrete stationary residual over interior nodes.
pub fn residual_sup(grid: &Grid, gamma: f64, u1: &[f64], u2: &[f64]) -> f64 {
    (1..grid.len() - 1)
        .map(|i| {
            let (r1, r2) = node_residual(grid, gamma, u1, u2, i);
            r1.abs().max(r2.abs())
        })
        .fold(0.0, f64::max)
}

/// Position of interior node `i` in the folded unknown vector: the
/// midpoint first, then the pairs `(m - p, m + p)`.
#[inline]
fn fold_index(m: usize, i: usize) -> usize {
    if i == m {
        0
    } else if i < m {
        2 * (m - i) - 1
    } else {
        2 * (i - m)
    }
}

/// Residual of the first equation with `u2 = mirror(u1)`, and its sup norm.
fn folded_residual(grid: &Grid, gamma: f64, u: &[f64], out: &mut [f64]) -> f64 {
    let n = grid.len();
    let m = grid.mid();
    let h2 = grid.h() * grid.h();
    let mut sup = 0.0f64;
    for i in 1..n - 1 {
        let a = u[i];
        let b = u[n - 1 - i];
        let r = -(u[i + 1] - 2.0 * a + u[i - 1]) / h2 + (a * a + gamma * b * b - 1.0) * a;
        out[fold_index(m, i)] = r;
        sup = sup.max(r.abs());
    }
    sup
}

fn folded_jacobian(grid: &Grid, gamma: f64, u: &[f64]) -> SymBandMatrix {
    let n = grid.len();
    let m = grid.mid();
    let h2 = grid.h() * grid.h();
    let mut jac = SymBandMatrix::zeros(n - 2, 2);
    for i in 1..n - 1 {
        let r = n - 1 - i;
        let (a, b) = (u[i], u[r]);
        let k = fold_index(m, i);
        jac.add(k, k, 2.0 / h2 + 3.0 * a * a + gamma * b * b - 1.0);
        if i == m {
            jac.add(k, k, 2.0 * gamma * a * a);
        } else if i < r {
            // Each mirror pair couples once; the entry is symmetric.
            jac.add(k, fold_index(m, r), 2.0 * gamma * a * b);
        }
        if i + 1 < n - 1 {
            jac.add(k, fold_index(m, i + 1), -1.0 / h2);
        }
    }
    jac
}

fn newton_solve(grid: &Grid, gamma: f64, u: &mut [f64], tol: f64) -> Result<f64> {
    const MAX_ITER: usize = 80;
    const MAX_HALVINGS: usize = 30;
    let n = grid.len();
    let m = grid.mid();
    let mut res = vec![0.0; n - 2];
    let mut trial = u.to_vec();
    let mut trial_res = vec![0.0; n - 2];
    let mut norm = folded_residual(grid, gamma, u, &mut res);
    let mut polished = false;
    for _ in 0..MAX_ITER {
        if norm <= tol {
            if polished {
                return Ok(norm);
            }
            polished = true;
        }
        let jac = folded_jacobian(grid, gamma, u);
        let step = jac
            .ldlt()
            .map_err(|_| Error::NonConvergence { residual: norm })?
            .solve(&res);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            trial.copy_from_slice(u);
            for i in 1..n - 1 {
                trial[i] -= lambda * step[fold_index(m, i)];
            }
            let t = folded_residual(grid, gamma, &trial, &mut trial_res);
            if t < norm || (polished && t <= tol) {
                u.copy_from_slice(&trial);
                res.copy_from_slice(&trial_res);
                norm = t;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            if norm <= tol {
                return Ok(norm);
            }
            return Err(Error::NonConvergence { residual: norm });
        }
    }
    if norm <= tol {
        Ok(norm)
    } else {
        Err(Error::NonConvergence { residual: norm })
    }
}

fn tanh_guess(grid: &Grid) -> Vec<f64> {
    let mut u = grid.sample(|x| 0.5 * (1.0 + x.tanh()));
    let n = grid.len();
    u[0] = 0.0;
    u[n - 1] = 1.0;
    u
}

/// The `tanh` initial guess as a profile-shaped state (useful as an energy
/// reference).
pub fn tanh_guess_state(grid: &Grid) -> ComplexPair {
    let u1 = tanh_guess(grid);
    let u2: Vec<f64> = (0..grid.len()).map(|i| u1[grid.mirror(i)]).collect();
    RealPair { grid: *grid, f1: u1, f2: u2 }.to_complex()
}

/// Solves the stationary boundary-value problem by damped Newton.
///
/// Values below `gamma = 1.2` are reached by continuation from `gamma = 2`.
pub fn solve_profile(gamma: f64, grid: &Grid, tol: f64) -> Result<WallProfile> {
    check_gamma(gamma)?;
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tol must be positive (got {tol})")));
    }
    let coupling = CouplingParams { gamma };
    let needed = 10.0 / coupling.kappa();
    if grid.half_width() < needed {
        return Err(Error::DomainTooSmall { mismatch: needed - grid.half_width() });
    }

    let mut u = tanh_guess(grid);
    if gamma < 1.2 {
        // Halve gamma - 1 from 1 until the target is reached.
        let mut g = 2.0;
        while g > gamma {
            newton_solve(grid, g, &mut u, tol.max(1e-8))?;
            g = (1.0 + 0.5 * (g - 1.0)).max(gamma);
            if g == gamma {
                break;
            }
        }
    }
    newton_solve(grid, gamma, &mut u, tol)?;

    let n = grid.len();
    let mismatch = (u[n - 2] - 1.0).abs();
    if mismatch > 100.0 * tol {
        return Err(Error::DomainTooSmall { mismatch });
    }
    let u2: Vec<f64> = (0..n).map(|i| u[grid.mirror(i)]).collect();
    WallProfile::from_values(*grid, gamma, u, u2)
}

/// Fitted exponential tails of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log u1` on the left window.
    pub rate_left: f64,
    /// Minus the slope of `log(1 - u1)` on the right window.
    pub rate_right: f64,
    pub window_left: (f64, f64),
    pub window_right: (f64, f64),
    /// Bounds `C_- <= u1(x) exp(-sqrt(gamma-1) x) <= C_+` over `x <= 0`,
    /// taken where `u1` is above the left floor.
    pub c_minus: f64,
    pub c_plus: f64,
    /// Same for `(1 - u1(x)) exp(sqrt(2) x)` over `x >= 0`.
    pub c_minus_right: f64,
    pub c_plus_right: f64,
}

/// Smallest `u1` trusted in the left fit.
pub const LEFT_FLOOR: f64 = 1e-14;
/// Smallest `1 - u1` trusted in the right fit; `u1` is stored near 1 with
/// absolute rounding of about 1e-16.
pub const RIGHT_FLOOR: f64 = 1e-11;

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Selects nodes of `[a, b]` (with `|a| > |b|`) whose value is above
/// `floor`. When values fall below the floor the window is shrunk once
/// toward the origin, keeping only the part above the floor; a remaining
/// window shorter than `0.1 L` is an underflow.
fn fit_window(grid: &Grid, a: f64, b: f64, value: impl Fn(usize) -> f64, floor: f64) -> Result<(Vec<f64>, Vec<f64>, (f64, f64))> {
    let idx: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let x = grid.x(i);
            x >= a.min(b) && x <= a.max(b)
        })
        .collect();
    let mut keep: Vec<usize> = idx.iter().copied().filter(|&i| value(i) >= floor).collect();
    if keep.len() < idx.len() {
        // Cut at the sub-floor node closest to the origin.
        let worst = idx
            .iter()
            .copied()
            .filter(|&i| value(i) < floor)
            .min_by(|&p, &q| grid.x(p).abs().total_cmp(&grid.x(q).abs()))
            .expect("non-empty");
        let cut = grid.x(worst).abs();
        keep.retain(|&i| grid.x(i).abs() < cut);
        let span = keep.first().zip(keep.last()).map(|(&p, &q)| (grid.x(q) - grid.x(p)).abs()).unwrap_or(0.0);
        if span < 0.1 * grid.half_width() {
            return Err(Error::WindowUnderflow { floor });
        }
    }
    let xs: Vec<f64> = keep.iter().map(|&i| grid.x(i)).collect();
    let ys: Vec<f64> = keep.iter().map(|&i| value(i).ln()).collect();
    let window = (xs[0], xs[xs.len() - 1]);
    Ok((xs, ys, window))
}

pub fn fit_decay(profile: &WallProfile) -> Result<DecayFit> {
    if !(profile.residual_norm <= 1e-8) {
        return Err(Error::Invalid(format!(
            "profile not converged (residual {:.3e})",
            profile.residual_norm
        )));
    }
    let grid = &profile.grid;
    let l = grid.half_width();
    let u1 = &profile.u1;
    let (xl, yl, wl) = fit_window(grid, -0.8 * l, -0.4 * l, |i| u1[i], LEFT_FLOOR)?;
    let (xr, yr, wr) = fit_window(grid, 0.8 * l, 0.4 * l, |i| 1.0 - u1[i], RIGHT_FLOOR)?;
    let rate_left = least_squares_slope(&xl, &yl);
    let rate_right = -least_squares_slope(&xr, &yr);

    let coupling = profile.coupling();
    let (kl, kr) = (coupling.left_rate(), coupling.right_rate());
    let mut c = (f64::INFINITY, 0.0f64);
    let mut cr = (f64::INFINITY, 0.0f64);
    for i in 0..grid.len() {
        let x = grid.x(i);
        if x <= 0.0 && u1[i] >= LEFT_FLOOR {
            let s = u1[i] * (-kl * x).exp();
            c = (c.0.min(s), c.1.max(s));
        }
        if x >= 0.0 && 1.0 - u1[i] >= RIGHT_FLOOR {
            let s = (1.0 - u1[i]) * (kr * x).exp();
            cr = (cr.0.min(s), cr.1.max(s));
        }
    }
    Ok(DecayFit {
        rate_left,
        rate_right,
        window_left: wl,
        window_right: wr,
        c_minus: c.0,
        c_plus: c.1,
        c_minus_right: cr.0,
        c_plus_right: cr.1,
    })
}

/// Splines of both profile components, for off-grid evaluation.
#[derive(Debug, Clone)]
pub struct ProfileInterpolant {
    grid: Grid,
    s1: CubicSpline,
    s2: CubicSpline,
}

impl ProfileInterpolant {
    pub fn new(profile: &WallProfile) -> Self {
        Self {
            grid: profile.grid,
            s1: CubicSpline::new(profile.grid, &profile.u1).expect("profile length"),
            s2: CubicSpline::new(profile.grid, &profile.u2).expect("profile length"),
        }
    }

    /// `(u1(x), u2(x))`, extended by the far-field constants outside the grid.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let l = self.grid.half_width();
        if x < -l {
            (0.0, 1.0)
        } else if x > l {
            (1.0, 0.0)
        } else {
            (self.s1.eval(x), self.s2.eval(x))
        }
    }
}

/// `U_{alpha, theta1, theta2} = (e^{-i theta1} u1(x - alpha), e^{-i theta2} u2(x - alpha))`.
pub fn translate_gauge(profile: &WallProfile, alpha: f64, theta1: f64, theta2: f64) -> Result<ComplexPair> {
    let grid = profile.grid;
    let limit = 0.25 * grid.half_width();
    if !(alpha.abs() <= limit) {
        return Err(Error::ShiftTooLarge { alpha, limit });
    }
    let n = grid.len();
    let steps = alpha / grid.h();
    let (mut v1, mut v2) = (vec![0.0; n], vec![0.0; n]);
    if (steps - steps.round()).abs() < 1e-9 {
        // Grid-aligned shift: exact node copy.
        let k = steps.round() as i64;
        for i in 0..n {
            let src = i as i64 - k;
            let (a, b) = if src < 0 {
                (0.0, 1.0)
            } else if src >= n as i64 {
                (1.0, 0.0)
            } else {
                (profile.u1[src as usize], profile.u2[src as usize])
            };
            v1[i] = a;
            v2[i] = b;
        }
    } else {
        let interp = ProfileInterpolant::new(profile);
        for i in 0..n {
            let (a, b) = interp.eval(grid.x(i) - alpha);
            v1[i] = a;
            v2[i] = b;
        }
    }
    let p1 = Complex64::from_polar(1.0, -theta1);
    let p2 = Complex64::from_polar(1.0, -theta2);
    Ok(ComplexPair {
        grid,
        psi1: v1.into_iter().map(|v| p1 * v).collect(),
        psi2: v2.into_iter().map(|v| p2 * v).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_profile(gamma: f64) -> WallProfile {
        let grid = Grid::new(30.0, 3001).unwrap();
        solve_profile(gamma, &grid, 1e-10).unwrap()
    }

    #[test]
    fn rejects_gamma_at_most_one() {
        let grid = Grid::new(30.0, 301).unwrap();
        let e = solve_profile(1.0, &grid, 1e-10).unwrap_err();
        assert!(e.to_string().contains("gamma must exceed 1"));
        assert!(solve_profile(0.9, &grid, 1e-10).is_err());
    }

    #[test]
    fn rejects_small_domain() {
        let grid = Grid::new(5.0, 501).unwrap();
        assert!(matches!(solve_profile(2.0, &grid, 1e-10), Err(Error::DomainTooSmall { .. })));
    }

    #[test]
    fn fold_index_is_a_bijection() {
        let n = 11;
        let m = 5;
        let mut seen: Vec<usize> = (1..n - 1).map(|i| fold_index(m, i)).collect();
        seen.sort();
        assert_eq!(seen, (0..n - 2).collect::<Vec<_>>());
    }

    #[test]
    fn profile_properties_gamma2() {
        let p = default_profile(2.0);
        assert!(p.residual_norm <= 1e-10);
        let n = p.grid.len();
        for i in 0..n {
            assert!((p.u1[i] - p.u2[n - 1 - i]).abs() <= 1e-8);
            assert!(p.u1[i] >= 0.0 && p.u2[i] >= 0.0);
            assert!(p.u1[i] * p.u1[i] + p.u2[i] * p.u2[i] <= 1.0 + 1e-10);
        }
        for i in 0..n - 1 {
            assert!(p.u1[i + 1] - p.u1[i] >= -1e-10);
            assert!(p.u2[i + 1] - p.u2[i] <= 1e-10);
        }
        assert!(p.midpoint_mismatch <= 1e-12);
    }

    #[test]
    fn translate_gauge_identity_and_phase() {
        let p = default_profile(2.0);
        let id = translate_gauge(&p, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(id, p.as_state());
        let flipped = translate_gauge(&p, 0.0, std::f64::consts::PI, 0.0).unwrap();
        for i in 0..p.grid.len() {
            assert!((flipped.psi1[i] + p.u1[i]).norm() < 1e-15);
            assert_eq!(flipped.psi2[i], Complex64::new(p.u2[i], 0.0));
        }
    }

    #[test]
    fn grid_aligned_shift_is_exact() {
        let p = default_profile(2.0);
        let k = 7usize;
        let s = translate_gauge(&p, k as f64 * p.grid.h(), 0.0, 0.0).unwrap();
        for i in k..p.grid.len() {
            assert_eq!(s.psi1[i].re, p.u1[i - k]);
            assert_eq!(s.psi2[i].re, p.u2[i - k]);
        }
    }

    #[test]
    fn shift_too_large() {
        let p = default_profile(2.0);
        assert!(matches!(translate_gauge(&p, 8.0, 0.0, 0.0), Err(Error::ShiftTooLarge { .. })));
    }

    #[test]
    fn fit_decay_requires_converged_profile() {
        let mut p = default_profile(2.0);
        p.residual_norm = 1e-3;
        assert!(fit_decay(&p).is_err());
    }
}
