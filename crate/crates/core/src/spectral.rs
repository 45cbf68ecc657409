//! The linearized operators `L+`, `L-`, `L_R` and the weighted-norm
//! operator `K`, their generalized spectra, and the continuation of
//! `(L_R, K)` eigenvalues in `R`.
//!
//! Operators are assembled in weak form over all `n` nodes: the stiffness
//! matrix of the cell-difference gradient (natural boundary conditions) plus
//! trapezoid-weighted potentials. The quadratic form of every matrix is then
//! literally the discrete `L^2` pairing used by the functionals. Internally
//! the two components are interleaved (`2 i + c`), which keeps the
//! bandwidth at 2; vectors exchanged with callers are stacked
//! (`c n + i`).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{count_below, lowest_pencil, EigOptions, PencilEigs};
use crate::error::{check_gamma, Error, Result};
use crate::grid::{gradient_form_on, gradient_form_real_on, ComplexPair, Grid, RealPair};
use crate::linalg::SymBandMatrix;
use crate::profile::{solve_profile, WallProfile};

/// Eigenvalues at or above this level are treated as discretized essential
/// spectrum.
pub const ESSENTIAL_LEVEL: f64 = 0.9;

/// Eigenvalues within this distance of zero count as kernel.
pub const KERNEL_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "R")]
pub enum OperatorKind {
    Lplus,
    Lminus,
    LR(f64),
    K,
}

impl OperatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::Lplus => "lplus",
            OperatorKind::Lminus => "lminus",
            OperatorKind::LR(_) => "lr",
            OperatorKind::K => "k",
        }
    }

    pub fn window(&self) -> Option<f64> {
        match self {
            OperatorKind::LR(r) => Some(*r),
            _ => None,
        }
    }
}

fn check_window(kind: OperatorKind, grid: &Grid) -> Result<()> {
    if let OperatorKind::LR(r) = kind {
        if !(r > 0.0 && r < grid.half_width()) {
            return Err(Error::Invalid(format!("R must lie in (0, L) (got {r})")));
        }
    }
    Ok(())
}

/// `2 [[u1^2, g u1 u2], [g u1 u2, u2^2]]` at node `i`.
fn coupling_block(profile: &WallProfile, i: usize) -> [[f64; 2]; 2] {
    let (a, b, g) = (profile.u1[i], profile.u2[i], profile.gamma);
    [[2.0 * a * a, 2.0 * g * a * b], [2.0 * g * a * b, 2.0 * b * b]]
}

/// Potential matrix of an operator at node `i`.
pub fn potential(kind: OperatorKind, profile: &WallProfile, i: usize) -> [[f64; 2]; 2] {
    let (a, b, g) = (profile.u1[i], profile.u2[i], profile.gamma);
    let minus = [[a * a + g * b * b - 1.0, 0.0], [0.0, g * a * a + b * b - 1.0]];
    let add = |m: [[f64; 2]; 2], c: [[f64; 2]; 2], s: f64| {
        [[m[0][0] + s * c[0][0], m[0][1] + s * c[0][1]], [m[1][0] + s * c[1][0], m[1][1] + s * c[1][1]]]
    };
    match kind {
        OperatorKind::Lminus => minus,
        OperatorKind::Lplus => add(minus, coupling_block(profile, i), 1.0),
        OperatorKind::LR(r) => {
            if profile.grid.inner(r).contains(i) {
                add(minus, coupling_block(profile, i), 1.0)
            } else {
                minus
            }
        }
        OperatorKind::K => [[(g - 1.0) * (1.0 - a * a), 0.0], [0.0, (g - 1.0) * (1.0 - b * b)]],
    }
}

/// Discrete `(L Psi, Phi)_{L^2}` for real pairs.
pub fn operator_form_real(kind: OperatorKind, profile: &WallProfile, f: &RealPair, g: &RealPair) -> Result<f64> {
    let grid = profile.grid;
    if f.grid != grid || g.grid != grid {
        return Err(Error::GridMismatch);
    }
    check_window(kind, &grid)?;
    let h = grid.h();
    let full = grid.full();
    let mut acc = gradient_form_real_on(&f.f1, &g.f1, h, full) + gradient_form_real_on(&f.f2, &g.f2, h, full);
    acc += full.integrate(h, |i| {
        let p = potential(kind, profile, i);
        let (x, y) = (f.f1[i], f.f2[i]);
        let (s, t) = (g.f1[i], g.f2[i]);
        s * (p[0][0] * x + p[0][1] * y) + t * (p[1][0] * x + p[1][1] * y)
    });
    Ok(acc)
}

/// Discrete `(L Psi, Phi)_{L^2}`, linear in `Psi`.
pub fn operator_form(kind: OperatorKind, profile: &WallProfile, psi: &ComplexPair, phi: &ComplexPair) -> Result<Complex64> {
    let grid = profile.grid;
    if psi.grid != grid || phi.grid != grid {
        return Err(Error::GridMismatch);
    }
    check_window(kind, &grid)?;
    let h = grid.h();
    let full = grid.full();
    let mut acc = gradient_form_on(&psi.psi1, &phi.psi1, h, full) + gradient_form_on(&psi.psi2, &phi.psi2, h, full);
    let w = grid.trapezoid_weights();
    for i in 0..grid.len() {
        let p = potential(kind, profile, i);
        let (x, y) = (psi.psi1[i], psi.psi2[i]);
        let (s, t) = (phi.psi1[i].conj(), phi.psi2[i].conj());
        acc += w[i] * (s * (p[0][0] * x + p[0][1] * y) + t * (p[1][0] * x + p[1][1] * y));
    }
    Ok(acc)
}

/// An assembled operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub gamma: f64,
    pub grid: Grid,
    /// Interleaved layout, bandwidth 2.
    pub matrix: SymBandMatrix,
}

/// Stacked `(f1, f2)` to interleaved.
pub fn interleave(stacked: &[f64]) -> Vec<f64> {
    let n = stacked.len() / 2;
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[2 * i] = stacked[i];
        out[2 * i + 1] = stacked[n + i];
    }
    out
}

/// Interleaved to stacked `(f1, f2)`.
pub fn deinterleave(inter: &[f64]) -> Vec<f64> {
    let n = inter.len() / 2;
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        out[i] = inter[2 * i];
        out[n + i] = inter[2 * i + 1];
    }
    out
}

/// A real pair as a stacked `2n` vector.
pub fn stack(f: &RealPair) -> Vec<f64> {
    f.f1.iter().chain(&f.f2).copied().collect()
}

/// A stacked `2n` vector as a real pair.
pub fn unstack(grid: Grid, v: &[f64]) -> RealPair {
    let n = grid.len();
    RealPair { grid, f1: v[..n].to_vec(), f2: v[n..].to_vec() }
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn bandwidth(&self) -> usize {
        self.matrix.bandwidth()
    }

    /// `A x` for a stacked vector, returned stacked.
    pub fn apply_stacked(&self, x: &[f64]) -> Vec<f64> {
        deinterleave(&self.matrix.apply(&interleave(x)))
    }

    pub fn form_stacked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.apply_stacked(x).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// Largest `|A_ij - A_ji|` of the dense expansion.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.matrix.to_dense();
        (&d - d.transpose()).abs().max()
    }

    /// Pointwise action `(A x)_i / w_i` of the operator on a real pair.
    pub fn apply_strong(&self, f: &RealPair) -> RealPair {
        let y = self.apply_stacked(&stack(f));
        let w = self.grid.trapezoid_weights();
        let n = self.grid.len();
        let mut out = unstack(self.grid, &y);
        for i in 0..n {
            out.f1[i] /= w[i];
            out.f2[i] /= w[i];
        }
        out
    }
}

fn stiffness_plus(kind: OperatorKind, profile: &WallProfile, pot: impl Fn(usize) -> [[f64; 2]; 2]) -> OperatorMatrix {
    let grid = profile.grid;
    let n = grid.len();
    let h = grid.h();
    let w = grid.trapezoid_weights();
    let mut m = SymBandMatrix::zeros(2 * n, 2);
    for i in 0..n - 1 {
        for c in 0..2 {
            let (p, q) = (2 * i + c, 2 * (i + 1) + c);
            m.add(p, p, 1.0 / h);
            m.add(q, q, 1.0 / h);
            m.add(q, p, -1.0 / h);
        }
    }
    for i in 0..n {
        let p = pot(i);
        m.add(2 * i, 2 * i, w[i] * p[0][0]);
        m.add(2 * i + 1, 2 * i + 1, w[i] * p[1][1]);
        m.add(2 * i + 1, 2 * i, w[i] * p[1][0]);
    }
    OperatorMatrix { kind, gamma: profile.gamma, grid, matrix: m }
}

pub fn assemble(kind: OperatorKind, profile: &WallProfile) -> Result<OperatorMatrix> {
    check_window(kind, &profile.grid)?;
    Ok(stiffness_plus(kind, profile, |i| potential(kind, profile, i)))
}

/// `L_R` assembled the other way, as `L+` minus the coupling block on
/// `|x| > R`.
pub fn assemble_lr_from_lplus(profile: &WallProfile, r: f64) -> Result<OperatorMatrix> {
    let kind = OperatorKind::LR(r);
    check_window(kind, &profile.grid)?;
    let inner = profile.grid.inner(r);
    Ok(stiffness_plus(kind, profile, |i| {
        let p = potential(OperatorKind::Lplus, profile, i);
        if inner.contains(i) {
            p
        } else {
            let c = coupling_block(profile, i);
            [[p[0][0] - c[0][0], p[0][1] - c[0][1]], [p[1][0] - c[1][0], p[1][1] - c[1][1]]]
        }
    }))
}

/// Largest entry difference between the two assemblies of `L_R`.
pub fn lr_routes_gap(profile: &WallProfile, r: f64) -> Result<f64> {
    Ok(assemble(OperatorKind::LR(r), profile)?.matrix.max_abs_diff(&assemble_lr_from_lplus(profile, r)?.matrix))
}

/// Relative residuals of the kernel elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelResiduals {
    pub lminus_u1: f64,
    pub lminus_u2: f64,
    pub lplus_du: f64,
}

fn l2(f: &RealPair) -> f64 {
    let grid = f.grid;
    grid.full().integrate(grid.h(), |i| f.f1[i] * f.f1[i] + f.f2[i] * f.f2[i]).sqrt()
}

/// `||L- U_j|| / ||U_j||_H` and `||L+ U'|| / ||U'||_H`, with the operator
/// applied pointwise and measured in `L^2`.
pub fn kernel_residuals(profile: &WallProfile) -> Result<KernelResiduals> {
    let lm = assemble(OperatorKind::Lminus, profile)?;
    let lp = assemble(OperatorKind::Lplus, profile)?;
    let k = assemble(OperatorKind::K, profile)?;
    let hn = |f: &RealPair| k.form_stacked(&stack(f), &stack(f)).sqrt();
    let u1 = profile.gauge_mode(0);
    let u2 = profile.gauge_mode(1);
    let du = profile.derivative();
    Ok(KernelResiduals {
        lminus_u1: l2(&lm.apply_strong(&u1)) / hn(&u1),
        lminus_u2: l2(&lm.apply_strong(&u2)) / hn(&u2),
        lplus_du: l2(&lp.apply_strong(&du)) / hn(&du),
    })
}

/// Lowest generalized eigenpairs of `(L, K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub kind: OperatorKind,
    pub gamma: f64,
    pub grid: Grid,
    pub eigenvalues: Vec<f64>,
    /// Stacked `2n` vectors, `K`-orthonormal.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
    pub residual_norms: Vec<f64>,
    /// Eigenvalues at or above [`ESSENTIAL_LEVEL`].
    pub essential: Vec<bool>,
    pub sigma: f64,
}

impl SpectralResult {
    pub fn kernel_count(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l.abs() <= KERNEL_THRESHOLD).count()
    }

    pub fn eigenvector(&self, k: usize) -> RealPair {
        unstack(self.grid, &self.eigenvectors[k])
    }
}

pub fn lowest_eigs(op: &OperatorMatrix, k: &OperatorMatrix, m: usize) -> Result<SpectralResult> {
    lowest_eigs_with(op, k, m, &EigOptions::default())
}

pub fn lowest_eigs_with(op: &OperatorMatrix, k: &OperatorMatrix, m: usize, opts: &EigOptions) -> Result<SpectralResult> {
    if k.kind != OperatorKind::K {
        return Err(Error::Invalid("second operator must be K".into()));
    }
    if op.grid != k.grid {
        return Err(Error::GridMismatch);
    }
    if m == 0 || m > 12 {
        return Err(Error::Invalid(format!("modes must lie in 1..=12 (got {m})")));
    }
    let PencilEigs { values, vectors, residuals, sigma } = lowest_pencil(&op.matrix, &k.matrix, m, opts)?;
    Ok(SpectralResult {
        kind: op.kind,
        gamma: op.gamma,
        grid: op.grid,
        essential: values.iter().map(|&v| v >= ESSENTIAL_LEVEL).collect(),
        eigenvalues: values,
        eigenvectors: vectors.iter().map(|v| deinterleave(v)).collect(),
        residual_norms: residuals,
        sigma,
    })
}

/// Number of eigenvalues of `(op, K)` strictly below `t`.
pub fn eigen_count_below(op: &OperatorMatrix, k: &OperatorMatrix, t: f64) -> Option<usize> {
    count_below(&op.matrix, &k.matrix, t)
}

/// One component of `L-` and `K` as scalar tridiagonal matrices.
fn scalar_pencil(component: usize, profile: &WallProfile) -> (SymBandMatrix, SymBandMatrix) {
    let grid = profile.grid;
    let n = grid.len();
    let h = grid.h();
    let w = grid.trapezoid_weights();
    let mut a = SymBandMatrix::zeros(n, 1);
    let mut b = SymBandMatrix::zeros(n, 1);
    for i in 0..n - 1 {
        for m in [&mut a, &mut b] {
            m.add(i, i, 1.0 / h);
            m.add(i + 1, i + 1, 1.0 / h);
            m.add(i + 1, i, -1.0 / h);
        }
    }
    for i in 0..n {
        let p = potential(OperatorKind::Lminus, profile, i);
        let q = potential(OperatorKind::K, profile, i);
        a.add(i, i, w[i] * p[component][component]);
        b.add(i, i, w[i] * q[component][component]);
    }
    (a, b)
}

/// Lowest `m` eigenvalues of the scalar problem for one component of
/// `(L-, K)`; `component` is 1 or 2.
pub fn decoupled_eigs(component: usize, profile: &WallProfile, m: usize) -> Result<Vec<f64>> {
    if !(component == 1 || component == 2) {
        return Err(Error::Invalid(format!("component must be 1 or 2 (got {component})")));
    }
    let (a, b) = scalar_pencil(component - 1, profile);
    Ok(lowest_pencil(&a, &b, m, &EigOptions::default())?.values)
}

/// `P(x; lambda)` of the scalar problem for the first component.
pub fn sturm_potential(profile: &WallProfile, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > -1.0 && lambda < 1.0) {
        return Err(Error::Invalid(format!("lambda must lie in (-1, 1) (got {lambda})")));
    }
    let g = profile.gamma;
    Ok((0..profile.grid.len())
        .map(|i| {
            let (a, b) = (profile.u1[i], profile.u2[i]);
            (a * a + g * b * b - 1.0 + lambda * (g - 1.0) * (a * a - 1.0)) / (1.0 - lambda)
        })
        .collect())
}

/// Ground-state eigenvalue of `-d^2/dx^2 + P` (standard problem, lumped mass).
pub fn ground_state(profile: &WallProfile, p: &[f64]) -> Result<f64> {
    let grid = profile.grid;
    let n = grid.len();
    let h = grid.h();
    let w = grid.trapezoid_weights();
    let mut a = SymBandMatrix::zeros(n, 1);
    let mut b = SymBandMatrix::zeros(n, 1);
    for i in 0..n - 1 {
        a.add(i, i, 1.0 / h);
        a.add(i + 1, i + 1, 1.0 / h);
        a.add(i + 1, i, -1.0 / h);
    }
    for i in 0..n {
        a.add(i, i, w[i] * p[i]);
        b.add(i, i, w[i]);
    }
    Ok(lowest_pencil(&a, &b, 1, &EigOptions::default())?.values[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SturmReport {
    pub lambdas: Vec<f64>,
    /// Ground-state eigenvalue `mu(lambda)` for each requested value.
    pub mu: Vec<f64>,
    /// `P(x; l2) <= P(x; l1)` at every node for every ordered pair `l1 < l2`.
    pub pointwise_monotone: bool,
    /// Largest `P(x; l2) - P(x; l1)` over ordered pairs and nodes.
    pub max_increase: f64,
    /// `mu` is nonincreasing along the sorted values.
    pub mu_nonincreasing: bool,
    /// `mu(0)` when zero is among the values.
    pub mu_zero: Option<f64>,
}

pub fn sturm_monotonicity_check(profile: &WallProfile, lambdas: &[f64]) -> Result<SturmReport> {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pots: Vec<Vec<f64>> = sorted.iter().map(|&l| sturm_potential(profile, l)).collect::<Result<_>>()?;
    let mut max_increase = f64::NEG_INFINITY;
    for a in 0..pots.len() {
        for b in a + 1..pots.len() {
            for (p2, p1) in pots[b].iter().zip(&pots[a]) {
                max_increase = max_increase.max(p2 - p1);
            }
        }
    }
    if pots.len() < 2 {
        max_increase = 0.0;
    }
    let mu: Vec<f64> = pots.iter().map(|p| ground_state(profile, p)).collect::<Result<_>>()?;
    let mu_nonincreasing = mu.windows(2).all(|w| w[1] <= w[0] + 1e-10);
    let mu_zero = sorted.iter().position(|&l| l == 0.0).map(|k| mu[k]);
    Ok(SturmReport { lambdas: sorted, mu, pointwise_monotone: max_increase <= 0.0, max_increase, mu_nonincreasing, mu_zero })
}

/// Lower bound `-(2 g + 1) / (g - 1)` for every `L_R` eigenvalue.
pub fn continuation_lower_bound(gamma: f64) -> f64 {
    -(2.0 * gamma + 1.0) / (gamma - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationCurve {
    pub gamma: f64,
    /// 1-based mode index.
    pub mode: usize,
    /// `(R, lambda_n^R)`, essential-level values omitted.
    pub samples: Vec<(f64, f64)>,
    /// Terminal reference from `(L+, K)`.
    pub lambda_inf: f64,
}

/// Eigenvalues of `(L_R, K)` for each `R` and the `(L+, K)` reference, one
/// curve per mode. Sweep points run in parallel.
pub fn continuation_sweep_on(profile: &WallProfile, modes: usize, r_list: &[f64]) -> Result<Vec<ContinuationCurve>> {
    if modes == 0 || modes > 6 {
        return Err(Error::Invalid(format!("modes must lie in 1..=6 (got {modes})")));
    }
    if r_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Invalid("R list must be strictly ascending".into()));
    }
    let k = assemble(OperatorKind::K, profile)?;
    let lp = assemble(OperatorKind::Lplus, profile)?;
    let reference = lowest_eigs(&lp, &k, modes)?;
    let points: Vec<Vec<f64>> = r_list
        .par_iter()
        .map(|&r| {
            let op = assemble(OperatorKind::LR(r), profile)?;
            Ok(lowest_eigs(&op, &k, modes)?.eigenvalues)
        })
        .collect::<Result<_>>()?;
    Ok((0..modes)
        .map(|m| ContinuationCurve {
            gamma: profile.gamma,
            mode: m + 1,
            samples: r_list
                .iter()
                .zip(&points)
                .filter(|(_, ev)| ev[m] < ESSENTIAL_LEVEL)
                .map(|(&r, ev)| (r, ev[m]))
                .collect(),
            lambda_inf: reference.eigenvalues[m],
        })
        .collect())
}

pub fn continuation_sweep(gamma: f64, modes: usize, r_list: &[f64], grid: &Grid) -> Result<Vec<ContinuationCurve>> {
    check_gamma(gamma)?;
    if r_list.iter().any(|&r| !(r > 0.0 && r < grid.half_width())) {
        return Err(Error::Invalid("every R must lie in (0, L)".into()));
    }
    let profile = solve_profile(gamma, grid, 1e-10)?;
    continuation_sweep_on(&profile, modes, r_list)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityConstants {
    pub lambda_minus: f64,
    pub lambda_plus_r: f64,
}

/// `R` counts as small when the second eigenvalue of `(L_R, K)` is at most
/// this level, or the first lies below minus this level (the continuation
/// of the translation mode has split off from zero).
pub const SMALL_R_LEVEL: f64 = 1e-4;

pub fn coercivity_constants_on(profile: &WallProfile, r: f64) -> Result<CoercivityConstants> {
    let k = assemble(OperatorKind::K, profile)?;
    let lr = lowest_eigs(&assemble(OperatorKind::LR(r), profile)?, &k, 2)?;
    let (l1, l2) = (lr.eigenvalues[0], lr.eigenvalues[1]);
    if !(l2 > SMALL_R_LEVEL) || l1 < -SMALL_R_LEVEL {
        return Err(Error::SmallR { r, lambda1: l1, lambda2: l2 });
    }
    let lm = lowest_eigs(&assemble(OperatorKind::Lminus, profile)?, &k, 3)?;
    Ok(CoercivityConstants { lambda_minus: lm.eigenvalues[2], lambda_plus_r: l2 })
}

pub fn coercivity_constants(gamma: f64, r: f64, grid: &Grid) -> Result<CoercivityConstants> {
    check_gamma(gamma)?;
    if !(r > 0.0 && r < grid.half_width()) {
        return Err(Error::Invalid(format!("R must lie in (0, L) (got {r})")));
    }
    let profile = solve_profile(gamma, grid, 1e-10)?;
    coercivity_constants_on(&profile, r)
}

/// Smallest sampled `R` whose `Lambda_+^R` reaches half its value at the
/// largest sampled `R`.
pub fn r0_from_samples(samples: &[(f64, f64)]) -> Option<f64> {
    let &(_, last) = samples.last()?;
    samples.iter().find(|(_, l)| *l >= 0.5 * last).map(|(r, _)| *r)
}

/// Smooth random pair: a few Gaussian bumps per component.
pub fn random_smooth_pair(grid: Grid, rng: &mut ChaCha8Rng, bumps: usize) -> RealPair {
    let l = grid.half_width();
    let mut f = RealPair::zeros(grid);
    for c in 0..2 {
        for _ in 0..bumps {
            let x0 = rng.random_range(-0.6 * l..0.6 * l);
            let width = rng.random_range(0.3..3.0);
            let amp = rng.random_range(-1.0..1.0);
            let comp = if c == 0 { &mut f.f1 } else { &mut f.f2 };
            for (i, v) in comp.iter_mut().enumerate() {
                let z = (grid.x(i) - x0) / width;
                *v += amp * (-z * z).exp();
            }
        }
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighReport {
    pub samples: usize,
    pub passed: usize,
    pub min_ratio: f64,
}

/// Rayleigh quotients `(L Psi, Psi) / ||Psi||_H^2` of random smooth fields
/// `K`-orthogonalized against `exclude` (stacked vectors), compared with
/// `bound - 1e-6`.
pub fn rayleigh_spot_check(
    op: &OperatorMatrix,
    k: &OperatorMatrix,
    exclude: &[Vec<f64>],
    bound: f64,
    samples: usize,
    seed: u64,
) -> RayleighReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kx: Vec<Vec<f64>> = exclude.iter().map(|v| k.apply_stacked(v)).collect();
    let mut passed = 0;
    let mut min_ratio = f64::INFINITY;
    for _ in 0..samples {
        let mut x = stack(&random_smooth_pair(op.grid, &mut rng, 4));
        for _ in 0..2 {
            for (v, kv) in exclude.iter().zip(&kx) {
                let c: f64 = x.iter().zip(kv).map(|(a, b)| a * b).sum::<f64>() / v.iter().zip(kv).map(|(a, b)| a * b).sum::<f64>();
                x.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
            }
        }
        let ratio = op.form_stacked(&x, &x) / k.form_stacked(&x, &x);
        min_ratio = min_ratio.min(ratio);
        if ratio >= bound - 1e-6 {
            passed += 1;
        }
    }
    RayleighReport { samples, passed, min_ratio }
}

/// `|<F, G>_H| / (||F||_H ||G||_H)` for stacked vectors.
pub fn h_cosine(k: &OperatorMatrix, f: &[f64], g: &[f64]) -> f64 {
    k.form_stacked(f, g).abs() / (k.form_stacked(f, f) * k.form_stacked(g, g)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wall(n: usize) -> WallProfile {
        solve_profile(2.0, &Grid::new(30.0, n).unwrap(), 1e-10).unwrap()
    }

    #[test]
    fn layout_roundtrip() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(deinterleave(&interleave(&v)), v);
        assert_eq!(interleave(&v)[..4], [0.0, 5.0, 1.0, 6.0]);
    }

    #[test]
    fn k_is_positive_definite() {
        let p = wall(601);
        let k = assemble(OperatorKind::K, &p).unwrap();
        for i in 0..p.grid.len() {
            let q = potential(OperatorKind::K, &p, i);
            assert!(q[0][0] >= 0.0 && q[1][1] >= 0.0);
        }
        assert_eq!(k.matrix.ldlt().unwrap().negative_count(), 0);
    }

    #[test]
    fn matrix_form_matches_functional_form() {
        let p = wall(401);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_smooth_pair(p.grid, &mut rng, 3);
        let g = random_smooth_pair(p.grid, &mut rng, 3);
        for kind in [OperatorKind::Lplus, OperatorKind::Lminus, OperatorKind::LR(4.0), OperatorKind::K] {
            let m = assemble(kind, &p).unwrap();
            let a = m.form_stacked(&stack(&f), &stack(&g));
            let b = operator_form_real(kind, &p, &f, &g).unwrap();
            assert!((a - b).abs() <= 1e-11 * b.abs().max(1.0), "{kind:?}: {a} vs {b}");
            assert_eq!(m.symmetry_defect(), 0.0);
        }
    }

    #[test]
    fn lr_limits() {
        let p = wall(601);
        let h = p.grid.h();
        let lm = assemble(OperatorKind::Lminus, &p).unwrap();
        let lp = assemble(OperatorKind::Lplus, &p).unwrap();
        let small = assemble(OperatorKind::LR(h), &p).unwrap();
        let large = assemble(OperatorKind::LR(p.grid.half_width() - h), &p).unwrap();
        let differing = |a: &OperatorMatrix, b: &OperatorMatrix| {
            (0..p.grid.len()).filter(|&i| (0..2).any(|c| a.matrix.get(2 * i + c, 2 * i + c) != b.matrix.get(2 * i + c, 2 * i + c))).count()
        };
        assert_eq!(differing(&small, &lm), 3);
        assert_eq!(differing(&large, &lp), 2);
        assert!(lr_routes_gap(&p, 5.0).unwrap() <= 1e-13);
        assert!(assemble(OperatorKind::LR(30.0), &p).is_err());
    }

    #[test]
    fn sturm_same_lambda() {
        let p = wall(601);
        let a = sturm_potential(&p, 0.3).unwrap();
        let b = sturm_potential(&p, 0.3).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x == y));
        assert!(sturm_potential(&p, 1.0).is_err());
    }

    #[test]
    fn r0_convention() {
        let s = [(2.0, 0.01), (4.0, 0.1), (6.0, 0.2), (8.0, 0.3)];
        assert_eq!(r0_from_samples(&s), Some(6.0));
        assert_eq!(r0_from_samples(&[]), None);
    }
}
