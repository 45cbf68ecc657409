//! Energy, the weighted space `H`, the distances `rho_A` and `rho_R`, the
//! quadratic variables `eta_j`, and the exact regroupings of the energy
//! difference around a wall.
//!
//! All integrals use the trapezoid rule and all gradients the cell
//! difference, so the identities below hold to rounding at the discrete
//! level (up to the profile's own residual).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_gamma, Error, Result};
use crate::grid::{gradient_form_on, gradient_form_real_on, ComplexPair, Grid, RealPair, Segment};
use crate::profile::WallProfile;
use crate::spectral::{operator_form_real, OperatorKind};

fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Discrete energy
/// `sum_j int |psi_j'|^2 + 1/2 (|psi1|^2 + |psi2|^2 - 1)^2 + (g - 1) |psi1|^2 |psi2|^2`.
pub fn energy(psi: &ComplexPair, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let grid = psi.grid;
    let h = grid.h();
    let full = grid.full();
    let grad = gradient_form_on(&psi.psi1, &psi.psi1, h, full).re + gradient_form_on(&psi.psi2, &psi.psi2, h, full).re;
    let pot = full.integrate(h, |i| {
        let r1 = psi.psi1[i].norm_sqr();
        let r2 = psi.psi2[i].norm_sqr();
        let s = r1 + r2 - 1.0;
        0.5 * s * s + (gamma - 1.0) * r1 * r2
    });
    Ok(grad + pot)
}

fn weighted_inner_on(psi: &ComplexPair, phi: &ComplexPair, profile: &WallProfile, seg: Segment) -> Complex64 {
    let h = psi.grid.h();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..2 {
        let (a, b) = (psi.component(j), phi.component(j));
        acc += gradient_form_on(a, b, h, seg);
        let mut mass = Complex64::new(0.0, 0.0);
        for i in seg.start..=seg.end {
            mass += seg.weight(i, h) * profile.weight(j, i) * a[i] * b[i].conj();
        }
        acc += mass;
    }
    acc
}

/// `<Psi, Phi>_H`, linear in the first argument.
pub fn weighted_inner(psi: &ComplexPair, phi: &ComplexPair, profile: &WallProfile) -> Result<Complex64> {
    same_grid(&psi.grid, &phi.grid)?;
    same_grid(&psi.grid, &profile.grid)?;
    Ok(weighted_inner_on(psi, phi, profile, psi.grid.full()))
}

/// Real inner product `<F, G>_H` of two real pairs.
pub fn weighted_inner_real(f: &RealPair, g: &RealPair, profile: &WallProfile) -> f64 {
    debug_assert!(f.grid == g.grid && f.grid == profile.grid);
    let grid = f.grid;
    let h = grid.h();
    let full = grid.full();
    let mut acc = 0.0;
    for j in 0..2 {
        let (a, b) = (f.component(j), g.component(j));
        acc += gradient_form_real_on(a, b, h, full);
        acc += full.integrate(h, |i| profile.weight(j, i) * a[i] * b[i]);
    }
    acc
}

pub fn h_norm(psi: &ComplexPair, profile: &WallProfile) -> Result<f64> {
    Ok(weighted_inner(psi, psi, profile)?.re.max(0.0).sqrt())
}

/// `||F||_H` of a real pair.
pub fn h_norm_real(f: &RealPair, profile: &WallProfile) -> f64 {
    weighted_inner_real(f, f, profile).max(0.0).sqrt()
}

/// Unweighted `H^1` norm of `Psi` on a segment.
pub fn h1_norm_on(psi: &ComplexPair, seg: Segment) -> f64 {
    let h = psi.grid.h();
    let mut acc = 0.0;
    for j in 0..2 {
        let a = psi.component(j);
        acc += gradient_form_on(a, a, h, seg).re + seg.integrate(h, |i| a[i].norm_sqr());
    }
    acc.max(0.0).sqrt()
}

pub fn h1_norm(psi: &ComplexPair) -> f64 {
    h1_norm_on(psi, psi.grid.full())
}

/// `L^2` norm of a real function on a union of segments.
pub(crate) fn l2_on(f: impl Fn(usize) -> f64, h: f64, segs: &[Segment]) -> f64 {
    segs.iter().map(|s| s.integrate(h, |i| f(i) * f(i))).sum::<f64>().max(0.0).sqrt()
}

/// Ratio `||Psi||_H / ||Psi||_{H^1}`; bounded by `max(1, sqrt(g - 1))`.
pub fn embedding_check(psi: &ComplexPair, profile: &WallProfile) -> Result<f64> {
    same_grid(&psi.grid, &profile.grid)?;
    let den = h1_norm(psi);
    if !(den > 0.0) {
        return Err(Error::Invalid("embedding ratio of a zero field".into()));
    }
    Ok(h_norm(psi, profile)? / den)
}

/// A state written as `U + V + i W` around a wall.
#[derive(Debug, Clone)]
pub struct Perturbation<'a> {
    pub v: RealPair,
    pub w: RealPair,
    pub profile: &'a WallProfile,
}

impl<'a> Perturbation<'a> {
    pub fn new(profile: &'a WallProfile, v: RealPair, w: RealPair) -> Result<Self> {
        same_grid(&v.grid, &profile.grid)?;
        same_grid(&w.grid, &profile.grid)?;
        Ok(Self { v, w, profile })
    }

    pub fn zero(profile: &'a WallProfile) -> Self {
        Self { v: RealPair::zeros(profile.grid), w: RealPair::zeros(profile.grid), profile }
    }

    /// `V = Re Psi - U`, `W = Im Psi`.
    pub fn from_state(profile: &'a WallProfile, psi: &ComplexPair) -> Result<Self> {
        same_grid(&psi.grid, &profile.grid)?;
        let mut v = psi.real_part();
        for i in 0..profile.grid.len() {
            v.f1[i] -= profile.u1[i];
            v.f2[i] -= profile.u2[i];
        }
        Ok(Self { v, w: psi.imag_part(), profile })
    }

    /// `V + i W`.
    pub fn as_complex(&self) -> ComplexPair {
        ComplexPair::from_parts(&self.v, &self.w).expect("same grid")
    }

    /// The full state `U + V + i W`.
    pub fn state(&self) -> ComplexPair {
        let mut s = self.as_complex();
        for i in 0..s.grid.len() {
            s.psi1[i] += self.profile.u1[i];
            s.psi2[i] += self.profile.u2[i];
        }
        s
    }

    pub fn h_norm(&self) -> f64 {
        h_norm(&self.as_complex(), self.profile).expect("same grid")
    }
}

/// `eta_j = 2 u_j v_j + v_j^2 + w_j^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaPair {
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
}

impl EtaPair {
    pub fn component(&self, j: usize) -> &[f64] {
        if j == 0 {
            &self.eta1
        } else {
            &self.eta2
        }
    }
}

pub fn eta_of(pert: &Perturbation) -> EtaPair {
    let p = pert.profile;
    let f = |u: &[f64], v: &[f64], w: &[f64]| -> Vec<f64> {
        u.iter().zip(v).zip(w).map(|((u, v), w)| 2.0 * u * v + v * v + w * w).collect()
    };
    EtaPair { eta1: f(&p.u1, &pert.v.f1, &pert.w.f1), eta2: f(&p.u2, &pert.v.f2, &pert.w.f2) }
}

/// `eta_j` from its other form `|u_j + v_j + i w_j|^2 - u_j^2`.
pub fn eta_from_modulus(pert: &Perturbation) -> EtaPair {
    let p = pert.profile;
    let f = |u: &[f64], v: &[f64], w: &[f64]| -> Vec<f64> {
        u.iter().zip(v).zip(w).map(|((u, v), w)| Complex64::new(u + v, *w).norm_sqr() - u * u).collect()
    };
    EtaPair { eta1: f(&p.u1, &pert.v.f1, &pert.w.f1), eta2: f(&p.u2, &pert.v.f2, &pert.w.f2) }
}

/// `1/2 (M Gamma, Gamma)` with `M = [[1, g], [g, 1]]`.
pub fn eta_quadratic(eta: &EtaPair, gamma: f64, grid: &Grid) -> f64 {
    let (a, b) = (&eta.eta1, &eta.eta2);
    grid.full().integrate(grid.h(), |i| 0.5 * (a[i] * a[i] + 2.0 * gamma * a[i] * b[i] + b[i] * b[i]))
}

/// Both sides of the energy decomposition around the wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSides {
    /// `E(U + V + i W) - E(U)`.
    pub lhs: f64,
    /// `(L- V, V) + (L- W, W) + 1/2 (M Gamma, Gamma)`.
    pub rhs: f64,
}

pub fn energy_decomposition_sides(pert: &Perturbation) -> Result<DecompositionSides> {
    let p = pert.profile;
    let lhs = energy(&pert.state(), p.gamma)? - energy(&p.as_state(), p.gamma)?;
    let rhs = operator_form_real(OperatorKind::Lminus, p, &pert.v, &pert.v)?
        + operator_form_real(OperatorKind::Lminus, p, &pert.w, &pert.w)?
        + eta_quadratic(&eta_of(pert), p.gamma, &p.grid);
    Ok(DecompositionSides { lhs, rhs })
}

/// `|LHS - RHS|` of the energy decomposition.
pub fn energy_decomposition_gap(pert: &Perturbation) -> Result<f64> {
    let s = energy_decomposition_sides(pert)?;
    Ok((s.lhs - s.rhs).abs())
}

fn check_radius(r: f64, grid: &Grid, name: &str) -> Result<()> {
    if !(r > 0.0 && r < grid.half_width()) {
        return Err(Error::Invalid(format!("{name} must lie in (0, L) (got {r})")));
    }
    Ok(())
}

/// `rho_R(Psi, Phi) = ||Psi - Phi||_H + sum_j || |psi_j|^2 - |phi_j|^2 ||_{L^2(|x| >= R)}`.
pub fn rho_r(psi: &ComplexPair, phi: &ComplexPair, r: f64, profile: &WallProfile) -> Result<f64> {
    same_grid(&psi.grid, &phi.grid)?;
    same_grid(&psi.grid, &profile.grid)?;
    let grid = psi.grid;
    check_radius(r, &grid, "R")?;
    let diff = psi.sub(phi)?;
    let outer = grid.outer(r);
    let mut total = h_norm(&diff, profile)?;
    for j in 0..2 {
        let (a, b) = (psi.component(j), phi.component(j));
        total += l2_on(|i| a[i].norm_sqr() - b[i].norm_sqr(), grid.h(), &outer);
    }
    Ok(total)
}

/// `rho_A(Psi, Phi)`: derivative and modulus differences in `L^2` plus the
/// sup of the difference over nodes in `[-A, A]`.
pub fn rho_a(psi: &ComplexPair, phi: &ComplexPair, a: f64) -> Result<f64> {
    same_grid(&psi.grid, &phi.grid)?;
    let grid = psi.grid;
    check_radius(a, &grid, "A")?;
    let h = grid.h();
    let full = [grid.full()];
    let inner = grid.inner(a);
    let mut total = 0.0;
    for j in 0..2 {
        let (p, q) = (psi.component(j), phi.component(j));
        let d: Vec<Complex64> = p.iter().zip(q).map(|(x, y)| x - y).collect();
        total += gradient_form_on(&d, &d, h, full[0]).re.max(0.0).sqrt();
        total += l2_on(|i| p[i].norm() - q[i].norm(), h, &full);
        total += (inner.start..=inner.end).map(|i| d[i].norm()).fold(0.0, f64::max);
    }
    Ok(total)
}

/// The regrouping of `Delta E = (L- V, V) + 1/2 (M Gamma, Gamma)` into an
/// inner part on `[-R, R]` and outer parts on `|x| >= R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaESplit {
    /// `int_{-R}^{R} B_+(V)`.
    pub inner_bplus: f64,
    /// `int_{|x| >= R} B_-(V)`.
    pub outer_bminus: f64,
    /// `1/2 int_{|x| >= R} (eta1^2 + eta2^2)`.
    pub outer_eta: f64,
    /// `g int_{|x| >= R} eta1 eta2`.
    pub cross_terms: f64,
    /// `int_{-R}^{R} N_3(V, W)`.
    pub n3: f64,
    /// `int_{-R}^{R} N_4(V, W)`.
    pub n4: f64,
}

impl DeltaESplit {
    pub fn total(&self) -> f64 {
        self.inner_bplus + self.outer_bminus + self.outer_eta + self.cross_terms + self.n3 + self.n4
    }
}

/// `Delta E` computed directly as `(L- V, V) + 1/2 (M Gamma, Gamma)`.
pub fn delta_e(pert: &Perturbation) -> Result<f64> {
    let p = pert.profile;
    Ok(operator_form_real(OperatorKind::Lminus, p, &pert.v, &pert.v)? + eta_quadratic(&eta_of(pert), p.gamma, &p.grid))
}

pub fn delta_e_split(pert: &Perturbation, r: f64) -> Result<DeltaESplit> {
    let p = pert.profile;
    let grid = p.grid;
    check_radius(r, &grid, "R")?;
    let (g, h) = (p.gamma, grid.h());
    let inner = grid.inner(r);
    let outer = grid.outer(r);
    let (v, w) = (&pert.v, &pert.w);
    let eta = eta_of(pert);

    let grad = |seg: Segment| gradient_form_real_on(&v.f1, &v.f1, h, seg) + gradient_form_real_on(&v.f2, &v.f2, h, seg);
    let minus_pot = |i: usize| {
        let (a, b) = (p.u1[i], p.u2[i]);
        (a * a + g * b * b - 1.0) * v.f1[i] * v.f1[i] + (g * a * a + b * b - 1.0) * v.f2[i] * v.f2[i]
    };
    let plus_pot = |i: usize| {
        let (a, b) = (p.u1[i], p.u2[i]);
        let (x, y) = (v.f1[i], v.f2[i]);
        (3.0 * a * a + g * b * b - 1.0) * x * x + 4.0 * g * a * b * x * y + (g * a * a + 3.0 * b * b - 1.0) * y * y
    };
    let s = |i: usize| (v.f1[i] * v.f1[i] + w.f1[i] * w.f1[i], v.f2[i] * v.f2[i] + w.f2[i] * w.f2[i]);

    let inner_bplus = grad(inner) + inner.integrate(h, plus_pot);
    let n3 = inner.integrate(h, |i| {
        let (s1, s2) = s(i);
        let (a, b, x, y) = (p.u1[i], p.u2[i], v.f1[i], v.f2[i]);
        2.0 * s1 * (a * x + g * b * y) + 2.0 * s2 * (g * a * x + b * y)
    });
    let n4 = inner.integrate(h, |i| {
        let (s1, s2) = s(i);
        0.5 * (s1 * s1 + 2.0 * g * s1 * s2 + s2 * s2)
    });
    let mut outer_bminus = 0.0;
    let mut outer_eta = 0.0;
    let mut cross_terms = 0.0;
    for seg in outer {
        outer_bminus += grad(seg) + seg.integrate(h, minus_pot);
        outer_eta += seg.integrate(h, |i| 0.5 * (eta.eta1[i] * eta.eta1[i] + eta.eta2[i] * eta.eta2[i]));
        cross_terms += seg.integrate(h, |i| g * eta.eta1[i] * eta.eta2[i]);
    }
    Ok(DeltaESplit { inner_bplus, outer_bminus, outer_eta, cross_terms, n3, n4 })
}

/// `<T Psi, Phi>_H = int (1 - u1^2 - u2^2)(psi1 conj(phi1) + psi2 conj(phi2))`.
pub fn t_form(psi: &ComplexPair, phi: &ComplexPair, profile: &WallProfile) -> Result<Complex64> {
    same_grid(&psi.grid, &phi.grid)?;
    same_grid(&psi.grid, &profile.grid)?;
    let grid = psi.grid;
    let w = grid.trapezoid_weights();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..grid.len() {
        let (a, b) = (profile.u1[i], profile.u2[i]);
        acc += w[i] * (1.0 - a * a - b * b) * (psi.psi1[i] * phi.psi1[i].conj() + psi.psi2[i] * phi.psi2[i].conj());
    }
    Ok(acc)
}

/// `<T_R Psi, Phi>_H`; the window `[-R, R]` is the same node mask used by
/// the assembled `L_R`.
pub fn t_r_form(psi: &ComplexPair, phi: &ComplexPair, r: f64, profile: &WallProfile) -> Result<Complex64> {
    let grid = psi.grid;
    check_radius(r, &grid, "R")?;
    let g = profile.gamma;
    let mut acc = g * t_form(psi, phi, profile)?;
    let w = grid.trapezoid_weights();
    let inner = grid.inner(r);
    for i in inner.start..=inner.end {
        let (a, b) = (profile.u1[i], profile.u2[i]);
        let (p1, p2, q1, q2) = (psi.psi1[i], psi.psi2[i], phi.psi1[i].conj(), phi.psi2[i].conj());
        acc -= 2.0 * w[i] * (a * a * p1 * q1 + g * a * b * (p1 * q2 + p2 * q1) + b * b * p2 * q2);
    }
    Ok(acc)
}
