//! Modulation parameters of states near the wall orbit.
//!
//! For a state `Psi` and parameters `(alpha, theta1, theta2)` write
//!
//! ```text
//! Psi_{alpha,theta}(x) = (e^{i theta1} psi1(x + alpha), e^{i theta2} psi2(x + alpha)) = U + V + iW
//! ```
//!
//! The parameters are fixed by the orthogonality conditions
//! `<V, U'>_H = <W, U_1>_H = <W, U_2>_H = 0`, where `U_1 = (u1, 0)` and
//! `U_2 = (0, u2)` are the gauge modes. Off-grid values of `Psi` come from
//! natural cubic splines, extended by the end values outside `[-L, L]`.
//! Along a trajectory the lab-frame rotation `e^{-it}` is removed first.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::functionals::weighted_inner_real;
use crate::grid::{diff1, ComplexPair, CubicSpline, Grid, RealPair};
use crate::profile::WallProfile;
use crate::spectral::{assemble, stack, unstack, OperatorKind, OperatorMatrix};

/// Orthogonality tolerance in `H` inner-product units.
pub const TOL_MOD: f64 = 1e-10;

/// Largest `||Psi_guess - U||_H` accepted as a starting point.
pub const BASIN_RADIUS: f64 = 0.3;

const NEWTON_TARGET: f64 = 1e-14;
const NEWTON_MAX: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ModulationState {
    pub alpha: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// `(<V, U'>_H, <W, U_1>_H, <W, U_2>_H)`.
    pub residual: [f64; 3],
    pub v: RealPair,
    pub w: RealPair,
}

impl ModulationState {
    /// Parameters `(0, 0, 0)` with `V = W = 0`.
    pub fn zero(grid: Grid) -> Self {
        Self {
            alpha: 0.0,
            theta1: 0.0,
            theta2: 0.0,
            residual: [0.0; 3],
            v: RealPair::zeros(grid),
            w: RealPair::zeros(grid),
        }
    }

    pub fn params(&self) -> [f64; 3] {
        [self.alpha, self.theta1, self.theta2]
    }

    /// `|alpha| + |theta1| + |theta2|`.
    pub fn size(&self) -> f64 {
        self.alpha.abs() + self.theta1.abs() + self.theta2.abs()
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// The representative of `theta` closest to `reference`.
pub fn unwrap_near(theta: f64, reference: f64) -> f64 {
    reference + wrap_angle(theta - reference)
}

/// Splines of the real and imaginary parts of both components.
#[derive(Debug, Clone)]
struct StateSplines {
    grid: Grid,
    parts: [[CubicSpline; 2]; 2],
    ends: [[Complex64; 2]; 2],
}

impl StateSplines {
    fn new(psi: &ComplexPair) -> Result<Self> {
        let grid = psi.grid;
        let n = grid.len();
        let mk = |j: usize, imag: bool| {
            let y: Vec<f64> = psi.component(j).iter().map(|z| if imag { z.im } else { z.re }).collect();
            CubicSpline::new(grid, &y)
        };
        Ok(Self {
            grid,
            parts: [[mk(0, false)?, mk(0, true)?], [mk(1, false)?, mk(1, true)?]],
            ends: [[psi.psi1[0], psi.psi1[n - 1]], [psi.psi2[0], psi.psi2[n - 1]]],
        })
    }

    /// Value and derivative of component `j` at `x`.
    fn eval(&self, j: usize, x: f64) -> (Complex64, Complex64) {
        let l = self.grid.half_width();
        let zero = Complex64::new(0.0, 0.0);
        if x < -l {
            return (self.ends[j][0], zero);
        }
        if x > l {
            return (self.ends[j][1], zero);
        }
        let (re, dre) = self.parts[j][0].eval_with_derivative(x);
        let (im, dim) = self.parts[j][1].eval_with_derivative(x);
        (Complex64::new(re, im), Complex64::new(dre, dim))
    }
}

/// `(e^{-i t1} psi1(x - a), e^{-i t2} psi2(x - a))` for a general state.
pub fn translate_gauge_state(psi: &ComplexPair, alpha: f64, theta1: f64, theta2: f64) -> Result<ComplexPair> {
    let grid = psi.grid;
    let limit = 0.25 * grid.half_width();
    if !(alpha.abs() <= limit) {
        return Err(Error::ShiftTooLarge { alpha, limit });
    }
    let sp = StateSplines::new(psi)?;
    let ph = [Complex64::from_polar(1.0, -theta1), Complex64::from_polar(1.0, -theta2)];
    let comp = |j: usize| (0..grid.len()).map(|i| ph[j] * sp.eval(j, grid.x(i) - alpha).0).collect();
    Ok(ComplexPair { grid, psi1: comp(0), psi2: comp(1) })
}

/// Profile data reused across fits: the `H` Gram operator applied to the
/// three test functions.
#[derive(Debug, Clone)]
pub struct Modulator<'a> {
    profile: &'a WallProfile,
    k: OperatorMatrix,
    /// `K U'`, `K U_1`, `K U_2`, stacked.
    tests: [Vec<f64>; 3],
}

impl<'a> Modulator<'a> {
    pub fn new(profile: &'a WallProfile) -> Result<Self> {
        let k = assemble(OperatorKind::K, profile)?;
        let du = profile.derivative();
        let tests = [
            k.apply_stacked(&stack(&du)),
            k.apply_stacked(&stack(&profile.gauge_mode(0))),
            k.apply_stacked(&stack(&profile.gauge_mode(1))),
        ];
        Ok(Self { profile, k, tests })
    }

    pub fn profile(&self) -> &WallProfile {
        self.profile
    }

    /// `Psi_{alpha,theta}` and its `x`-derivative at the nodes, stacked by
    /// component.
    fn sample(&self, sp: &StateSplines, p: [f64; 3]) -> (Vec<Complex64>, Vec<Complex64>) {
        let grid = self.profile.grid;
        let n = grid.len();
        let mut z = vec![Complex64::new(0.0, 0.0); 2 * n];
        let mut dz = z.clone();
        for j in 0..2 {
            let ph = Complex64::from_polar(1.0, p[1 + j]);
            for i in 0..n {
                let (v, d) = sp.eval(j, grid.x(i) + p[0]);
                z[j * n + i] = ph * v;
                dz[j * n + i] = ph * d;
            }
        }
        (z, dz)
    }

    /// Orthogonality residuals and their Jacobian at the sampled state.
    fn system(&self, z: &[Complex64], dz: &[Complex64]) -> (Vector3<f64>, Matrix3<f64>) {
        let n = self.profile.grid.len();
        let u = stack(&self.profile.as_pair());
        let mut f = Vector3::zeros();
        let mut jac = Matrix3::zeros();
        for idx in 0..2 * n {
            let c = idx / n;
            let (t0, t1, t2) = (self.tests[0][idx], self.tests[1][idx], self.tests[2][idx]);
            f[0] += (z[idx].re - u[idx]) * t0;
            f[1] += z[idx].im * t1;
            f[2] += z[idx].im * t2;
            jac[(0, 0)] += dz[idx].re * t0;
            jac[(1, 0)] += dz[idx].im * t1;
            jac[(2, 0)] += dz[idx].im * t2;
            // d/dtheta_c multiplies component c by i.
            jac[(0, 1 + c)] -= z[idx].im * t0;
            jac[(1, 1 + c)] += z[idx].re * t1;
            jac[(2, 1 + c)] += z[idx].re * t2;
        }
        (f, jac)
    }

    fn h_distance(&self, z: &[Complex64]) -> f64 {
        let u = stack(&self.profile.as_pair());
        let re: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a.re - b).collect();
        let im: Vec<f64> = z.iter().map(|a| a.im).collect();
        (self.k.form_stacked(&re, &re) + self.k.form_stacked(&im, &im)).max(0.0).sqrt()
    }

    /// Solves the orthogonality conditions by Newton's method from `guess`.
    pub fn fit(&self, psi: &ComplexPair, guess: [f64; 3]) -> Result<ModulationState> {
        let grid = self.profile.grid;
        if psi.grid != grid {
            return Err(Error::GridMismatch);
        }
        if !psi.is_finite() || guess.iter().any(|g| !g.is_finite()) {
            return Err(Error::Invalid("non-finite state or guess".into()));
        }
        let limit = 0.25 * grid.half_width();
        let sp = StateSplines::new(psi)?;
        let mut p = guess;
        let (mut z, dz) = self.sample(&sp, p);
        let dist = self.h_distance(&z);
        let (mut f, mut jac) = self.system(&z, &dz);
        if dist > BASIN_RADIUS {
            return Err(Error::OutsideBasin { residual: f.amax() });
        }
        for _ in 0..NEWTON_MAX {
            if f.amax() <= NEWTON_TARGET {
                break;
            }
            let Some(step) = jac.lu().solve(&f) else {
                return Err(Error::OutsideBasin { residual: f.amax() });
            };
            let mut t = 1.0;
            let mut accepted = None;
            while t >= 1e-3 {
                let trial = [p[0] - t * step[0], p[1] - t * step[1], p[2] - t * step[2]];
                if trial[0].abs() <= limit {
                    let (tz, tdz) = self.sample(&sp, trial);
                    let (tf, tj) = self.system(&tz, &tdz);
                    if tf.amax() < f.amax() {
                        accepted = Some((trial, tz, tdz, tf, tj));
                        break;
                    }
                }
                t *= 0.5;
            }
            // No decrease: the residual sits at the rounding floor.
            let Some(next) = accepted else { break };
            let stalled = (0..3).all(|i| (next.0[i] - p[i]).abs() <= 1e-15 * (1.0 + p[i].abs()));
            (p, z, _, f, jac) = next;
            if stalled {
                break;
            }
        }
        if !(f.amax() <= TOL_MOD) || p[0].abs() > limit {
            return Err(Error::OutsideBasin { residual: f.amax() });
        }
        let n = grid.len();
        let u = stack(&self.profile.as_pair());
        let v: Vec<f64> = (0..2 * n).map(|i| z[i].re - u[i]).collect();
        let w: Vec<f64> = z.iter().map(|a| a.im).collect();
        Ok(ModulationState {
            alpha: p[0],
            theta1: wrap_angle(p[1]),
            theta2: wrap_angle(p[2]),
            residual: [f[0], f[1], f[2]],
            v: unstack(grid, &v),
            w: unstack(grid, &w),
        })
    }
}

/// One-shot fit; see [`Modulator::fit`].
pub fn fit_modulation(psi: &ComplexPair, profile: &WallProfile, guess: &ModulationState) -> Result<ModulationState> {
    Modulator::new(profile)?.fit(psi, guess.params())
}

/// Checks the three orthogonality conditions of a decomposition.
pub fn orthogonality_residuals(v: &RealPair, w: &RealPair, profile: &WallProfile) -> [f64; 3] {
    let du = profile.derivative();
    [
        weighted_inner_real(v, &du, profile),
        weighted_inner_real(w, &profile.gauge_mode(0), profile),
        weighted_inner_real(w, &profile.gauge_mode(1), profile),
    ]
}

/// The matrix multiplying the parameter rates in the projected evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationMatrix {
    pub b: [[f64; 3]; 3],
    pub leading: [[f64; 3]; 3],
    pub correction: [[f64; 3]; 3],
}

fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

impl ModulationMatrix {
    /// Spectral condition number of `B`.
    pub fn condition(&self) -> f64 {
        condition_number(&to_matrix(&self.b))
    }

    pub fn leading_condition(&self) -> f64 {
        condition_number(&to_matrix(&self.leading))
    }

    /// Spectral norm of the correction.
    pub fn correction_norm(&self) -> f64 {
        to_matrix(&self.correction).singular_values().max()
    }
}

fn condition_number(m: &Matrix3<f64>) -> f64 {
    let s = m.singular_values();
    s.max() / s.min()
}

fn derivative_pair(f: &RealPair) -> Result<RealPair> {
    Ok(RealPair { grid: f.grid, f1: diff1(&f.f1, &f.grid)?, f2: diff1(&f.f2, &f.grid)? })
}

pub fn assemble_b(state: &ModulationState, profile: &WallProfile) -> Result<ModulationMatrix> {
    let ip = |a: &RealPair, b: &RealPair| weighted_inner_real(a, b, profile);
    let du = profile.derivative();
    let u1 = profile.gauge_mode(0);
    let u2 = profile.gauge_mode(1);
    let (v, w) = (&state.v, &state.w);
    let dv = derivative_pair(v)?;
    let dw = derivative_pair(w)?;
    let (v1, v2, w1, w2) = (v.project(0), v.project(1), w.project(0), w.project(1));
    let leading = [[-ip(&du, &du), 0.0, 0.0], [0.0, ip(&u1, &u1), 0.0], [0.0, 0.0, ip(&u2, &u2)]];
    let correction = [
        [-ip(&dv, &du), ip(&w1, &du), ip(&w2, &du)],
        [ip(&dw, &u1), ip(&v1, &u1), ip(&v2, &u1)],
        [ip(&dw, &u2), ip(&v1, &u2), ip(&v2, &u2)],
    ];
    let mut b = leading;
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] += correction[i][j];
        }
    }
    Ok(ModulationMatrix { b, leading, correction })
}

/// `(<L- W, U'>_H, <L+ V, U_1>_H, <L+ V, U_2>_H)`, the linear part of the
/// right-hand side of the rate equations.
pub fn rate_forcing(state: &ModulationState, profile: &WallProfile) -> Result<[f64; 3]> {
    let lm = assemble(OperatorKind::Lminus, profile)?;
    let lp = assemble(OperatorKind::Lplus, profile)?;
    let lw = lm.apply_strong(&state.w);
    let lv = lp.apply_strong(&state.v);
    Ok([
        weighted_inner_real(&lw, &profile.derivative(), profile),
        weighted_inner_real(&lv, &profile.gauge_mode(0), profile),
        weighted_inner_real(&lv, &profile.gauge_mode(1), profile),
    ])
}

/// Parameters along a trajectory, with the phases lifted continuously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub t: f64,
    pub alpha: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub residual: [f64; 3],
}

impl TrackRecord {
    pub fn size(&self) -> f64 {
        self.alpha.abs() + self.theta1.abs() + self.theta2.abs()
    }

    /// `(|alpha| + |theta1| + |theta2|) / max(1, |t|)`.
    pub fn ratio(&self) -> f64 {
        self.size() / self.t.abs().max(1.0)
    }
}

/// Sequential warm-started fitting of lab-frame snapshots.
#[derive(Debug, Clone)]
pub struct Tracker<'a> {
    modulator: Modulator<'a>,
    pub records: Vec<TrackRecord>,
}

impl<'a> Tracker<'a> {
    pub fn new(profile: &'a WallProfile) -> Result<Self> {
        Ok(Self { modulator: Modulator::new(profile)?, records: Vec::new() })
    }

    /// Fits the snapshot at time `t`; the returned state carries the lifted
    /// phases.
    pub fn push(&mut self, t: f64, psi: &ComplexPair) -> Result<ModulationState> {
        let rot = Complex64::from_polar(1.0, t);
        let co = psi.rotated(rot, rot);
        let guess = self.records.last().map_or([0.0; 3], |r| [r.alpha, r.theta1, r.theta2]);
        let mut state = self.modulator.fit(&co, guess).map_err(|_| Error::TrackingLost { time: t })?;
        state.theta1 = unwrap_near(state.theta1, guess[1]);
        state.theta2 = unwrap_near(state.theta2, guess[2]);
        self.records.push(TrackRecord {
            t,
            alpha: state.alpha,
            theta1: state.theta1,
            theta2: state.theta2,
            residual: state.residual,
        });
        Ok(state)
    }

    pub fn finish(self) -> Tracking {
        Tracking::from_records(self.records)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracking {
    pub records: Vec<TrackRecord>,
    /// Finite-difference `(d alpha/dt, d theta1/dt, d theta2/dt)` per record.
    pub rates: Vec<[f64; 3]>,
    /// `max_t (|alpha| + |theta1| + |theta2|) / max(1, |t|)`.
    pub growth: f64,
}

impl Tracking {
    pub fn from_records(records: Vec<TrackRecord>) -> Self {
        let m = records.len();
        let p = |r: &TrackRecord| [r.alpha, r.theta1, r.theta2];
        let rates = (0..m)
            .map(|k| {
                if m < 2 {
                    return [0.0; 3];
                }
                let (a, b) = if k == 0 {
                    (0, 1)
                } else if k == m - 1 {
                    (m - 2, m - 1)
                } else {
                    (k - 1, k + 1)
                };
                let dt = records[b].t - records[a].t;
                let (pa, pb) = (p(&records[a]), p(&records[b]));
                [(pb[0] - pa[0]) / dt, (pb[1] - pa[1]) / dt, (pb[2] - pa[2]) / dt]
            })
            .collect();
        let growth = records.iter().map(TrackRecord::ratio).fold(0.0, f64::max);
        Self { records, rates, growth }
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().map(|r| r[0].abs() + r[1].abs() + r[2].abs()).fold(0.0, f64::max)
    }
}

/// Fits every snapshot of a trajectory in order.
pub fn track(traj: &Trajectory, profile: &WallProfile) -> Result<Tracking> {
    let mut tracker = Tracker::new(profile)?;
    for (t, s) in traj.times.iter().zip(&traj.snapshots) {
        tracker.push(*t, s)?;
    }
    Ok(tracker.finish())
}
