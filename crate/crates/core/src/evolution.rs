//! Time integration of the coupled system on the truncated line.
//!
//! Steps are taken in the frame rotating with the wall, `phi = e^{it} psi`,
//! where the equation reads `i phi_t = -phi'' + (|phi1|^2 + g |phi2|^2 - 1) phi1`
//! (and symmetrically), the wall is stationary and the far-field values
//! are constant. The returned states are in the lab frame.
//!
//! The scheme is Crank-Nicolson with the nonlinear coefficient evaluated at
//! the averaged densities `(rho^n + rho^{n+1}) / 2`. Because the potential
//! part of the energy is quadratic in the densities, this conserves the
//! discrete energy exactly; the implicit equations are solved by
//! fixed-point iteration with one tridiagonal solve per component.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_gamma, Error, Result};
use crate::functionals::energy;
use crate::grid::{ComplexPair, Grid};
use crate::linalg::solve_tridiagonal_const_off;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    CrankNicolsonRelaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub scheme: Scheme,
    pub nl_tol: f64,
    pub nl_max_iter: usize,
}

/// Relative energy drift at which [`evolve`] aborts.
pub const DRIFT_ABORT: f64 = 1e-5;

impl EvolveConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self { dt, t_final, scheme: Scheme::CrankNicolsonRelaxed, nl_tol: 1e-12, nl_max_iter: 50 }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.5 * grid.h() * (1.0 + 1e-12)) {
            return Err(Error::Invalid(format!("dt must lie in (0, h/2] = (0, {}] (got {})", 0.5 * grid.h(), self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Invalid(format!("T must be nonnegative (got {})", self.t_final)));
        }
        if !(self.nl_tol > 0.0 && self.nl_tol <= 1e-10) {
            return Err(Error::Invalid(format!("nl_tol must lie in (0, 1e-10] (got {})", self.nl_tol)));
        }
        if self.nl_max_iter == 0 {
            return Err(Error::Invalid("nl_max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps to reach `T`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Reusable buffers for [`Stepper::step`].
#[derive(Debug, Clone)]
pub struct Stepper {
    gamma: f64,
    grid: Grid,
    nl_tol: f64,
    nl_max_iter: usize,
    next: [Vec<Complex64>; 2],
    prev_iter: [Vec<Complex64>; 2],
    diag: Vec<Complex64>,
    rhs: Vec<Complex64>,
    work: Vec<Complex64>,
    coef: [Vec<f64>; 2],
    /// Fixed-point sweeps used by the last step.
    pub last_iterations: usize,
}

impl Stepper {
    pub fn new(grid: Grid, gamma: f64, config: &EvolveConfig) -> Result<Self> {
        check_gamma(gamma)?;
        let n = grid.len();
        let z = vec![Complex64::new(0.0, 0.0); n];
        Ok(Self {
            gamma,
            grid,
            nl_tol: config.nl_tol,
            nl_max_iter: config.nl_max_iter,
            next: [z.clone(), z.clone()],
            prev_iter: [z.clone(), z.clone()],
            diag: Vec::with_capacity(n),
            rhs: Vec::with_capacity(n),
            work: Vec::with_capacity(n),
            coef: [vec![0.0; n], vec![0.0; n]],
            last_iterations: 0,
        })
    }

    /// Advances `psi` by `dt` (either sign, `|dt| <= h/2`) in place.
    pub fn step(&mut self, psi: &mut ComplexPair, dt: f64) -> Result<()> {
        if psi.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        if !(dt != 0.0 && dt.abs() <= 0.5 * self.grid.h() * (1.0 + 1e-12)) {
            return Err(Error::Invalid(format!("|dt| must lie in (0, h/2] (got {dt})")));
        }
        let n = self.grid.len();
        let h2 = self.grid.h() * self.grid.h();
        let g = self.gamma;
        let idt = Complex64::new(0.0, 1.0 / dt);
        let off = Complex64::new(0.5 / h2, 0.0);

        for c in 0..2 {
            self.next[c].clear();
            self.next[c].extend_from_slice(psi.component(c));
        }
        let mut iterations = 0;
        loop {
            iterations += 1;
            for i in 0..n {
                let r1 = 0.5 * (psi.psi1[i].norm_sqr() + self.next[0][i].norm_sqr());
                let r2 = 0.5 * (psi.psi2[i].norm_sqr() + self.next[1][i].norm_sqr());
                self.coef[0][i] = r1 + g * r2 - 1.0;
                self.coef[1][i] = g * r1 + r2 - 1.0;
            }
            for c in 0..2 {
                self.prev_iter[c].clone_from(&self.next[c]);
                let old = psi.component(c);
                // Interior unknowns 1..n-1; boundary values stay pinned.
                self.diag.clear();
                self.rhs.clear();
                for i in 1..n - 1 {
                    let q = self.coef[c][i];
                    self.diag.push(idt - 1.0 / h2 - 0.5 * q);
                    let lap = (old[i + 1] - 2.0 * old[i] + old[i - 1]) / h2;
                    self.rhs.push(idt * old[i] - 0.5 * lap + 0.5 * q * old[i]);
                }
                let m = self.rhs.len();
                self.rhs[0] -= off * old[0];
                self.rhs[m - 1] -= off * old[n - 1];
                solve_tridiagonal_const_off(&self.diag, off, &mut self.rhs, &mut self.work);
                self.next[c][1..n - 1].copy_from_slice(&self.rhs);
            }
            let update = (0..2)
                .flat_map(|c| self.next[c].iter().zip(&self.prev_iter[c]).map(|(a, b)| (a - b).norm()))
                .fold(0.0, f64::max);
            if !update.is_finite() {
                return Err(Error::NonFinite { step: 0 });
            }
            if update <= self.nl_tol {
                break;
            }
            if iterations >= self.nl_max_iter {
                return Err(Error::InnerNoConvergence { update });
            }
        }
        self.last_iterations = iterations;
        let rot = Complex64::from_polar(1.0, -dt);
        for c in 0..2 {
            let dst = psi.component_mut(c);
            for (d, s) in dst.iter_mut().zip(&self.next[c]) {
                *d = rot * s;
            }
        }
        Ok(())
    }
}

/// One step of the scheme from a fresh [`Stepper`].
pub fn step(psi: &ComplexPair, dt: f64, gamma: f64, config: &EvolveConfig) -> Result<ComplexPair> {
    if !psi.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    let mut out = psi.clone();
    Stepper::new(psi.grid, gamma, config)?.step(&mut out, dt)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<ComplexPair>,
    pub energy_series: Vec<f64>,
    /// `int (|psi1|^2 + |psi2|^2 - 1)` at each snapshot.
    pub mass_series: Vec<f64>,
}

impl Trajectory {
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy_series[0];
        self.energy_series.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(1.0)
    }
}

pub fn excess_mass(psi: &ComplexPair) -> f64 {
    let grid = psi.grid;
    grid.full().integrate(grid.h(), |i| psi.psi1[i].norm_sqr() + psi.psi2[i].norm_sqr() - 1.0)
}

/// Evolves to `T`, calling `observe(t, state, energy)` at `t = 0`, every
/// `stride` steps and at the final step.
pub fn evolve_with(
    psi0: &ComplexPair,
    gamma: f64,
    config: &EvolveConfig,
    stride: usize,
    mut observe: impl FnMut(f64, &ComplexPair, f64) -> Result<()>,
) -> Result<()> {
    config.validate(&psi0.grid)?;
    if stride == 0 {
        return Err(Error::Invalid("stride must be positive".into()));
    }
    if !psi0.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    let e0 = energy(psi0, gamma)?;
    observe(0.0, psi0, e0)?;
    let steps = config.steps();
    let mut stepper = Stepper::new(psi0.grid, gamma, config)?;
    let mut psi = psi0.clone();
    for k in 1..=steps {
        stepper.step(&mut psi, config.dt).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { step: k },
            other => other,
        })?;
        if k % stride == 0 || k == steps {
            let t = k as f64 * config.dt;
            let e = energy(&psi, gamma)?;
            let drift = (e - e0).abs() / e0.abs().max(1.0);
            if drift > DRIFT_ABORT {
                return Err(Error::EnergyDriftExceeded { drift, time: t });
            }
            observe(t, &psi, e)?;
        }
    }
    Ok(())
}

/// Evolves and keeps every `stride`-th state.
pub fn evolve(psi0: &ComplexPair, gamma: f64, config: &EvolveConfig, stride: usize) -> Result<Trajectory> {
    let mut traj = Trajectory { times: vec![], snapshots: vec![], energy_series: vec![], mass_series: vec![] };
    evolve_with(psi0, gamma, config, stride, |t, s, e| {
        traj.times.push(t);
        traj.mass_series.push(excess_mass(s));
        traj.snapshots.push(s.clone());
        traj.energy_series.push(e);
        Ok(())
    })?;
    Ok(traj)
}
