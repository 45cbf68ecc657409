//! Perturb-evolve-track experiments around a wall, and the energy control
//! checks behind them.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_gamma, Error, Result};
use crate::evolution::{evolve_with, EvolveConfig};
use crate::functionals::{energy, eta_of, h_norm, h_norm_real, rho_r, Perturbation};
use crate::grid::{gradient_form_real_on, ComplexPair, Grid, RealPair, Segment};
use crate::modulation::{orthogonality_residuals, Tracker, TrackRecord, TOL_MOD};
use crate::profile::{solve_profile, translate_gauge, WallProfile};
use crate::spectral::{coercivity_constants_on, CoercivityConstants};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbationKind {
    RandomSmooth(u64),
    BumpReal,
    BumpImag,
    KickPhase,
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::RandomSmooth(s) => write!(f, "RandomSmooth({s})"),
            PerturbationKind::BumpReal => f.write_str("BumpReal"),
            PerturbationKind::BumpImag => f.write_str("BumpImag"),
            PerturbationKind::KickPhase => f.write_str("KickPhase"),
        }
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    /// Accepts `RandomSmooth(7)`, `random_smooth:7`, `BumpReal`, `bump_real`, ...
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.trim().chars().filter(|c| *c != '_').collect::<String>().to_ascii_lowercase();
        let bad = || Error::Invalid(format!("unknown perturbation '{s}'"));
        match norm.as_str() {
            "bumpreal" => Ok(PerturbationKind::BumpReal),
            "bumpimag" => Ok(PerturbationKind::BumpImag),
            "kickphase" => Ok(PerturbationKind::KickPhase),
            _ => {
                let rest = norm.strip_prefix("randomsmooth").ok_or_else(bad)?;
                let seed = rest.trim_start_matches([':', '(']).trim_end_matches(')');
                seed.trim().parse().map(PerturbationKind::RandomSmooth).map_err(|_| bad())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub gamma: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub stride: usize,
    #[serde(rename = "R")]
    pub r: f64,
    pub delta: f64,
    pub perturbation: PerturbationKind,
    /// Decay rate in the ball radius; `min(sqrt(g - 1), sqrt 2)` when absent.
    pub kappa: Option<f64>,
    /// Ball scale, reported only.
    pub nu: f64,
}

const REQUIRED_KEYS: [&str; 9] = ["gamma", "L", "n", "dt", "T", "stride", "R", "delta", "perturbation"];

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !REQUIRED_KEYS.contains(&k) && k != "kappa" && k != "nu" {
                return Err(Error::Invalid(format!("line {}: unknown key '{k}'", lineno + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Invalid(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
        }
        for k in REQUIRED_KEYS {
            if !map.contains_key(k) {
                return Err(Error::Invalid(format!("missing key '{k}'")));
            }
        }
        fn num<T: FromStr>(map: &std::collections::BTreeMap<String, String>, k: &str) -> Result<T> {
            map[k].parse().map_err(|_| Error::Invalid(format!("bad value for '{k}': '{}'", map[k])))
        }
        let cfg = Self {
            gamma: num(&map, "gamma")?,
            l: num(&map, "L")?,
            n: num(&map, "n")?,
            dt: num(&map, "dt")?,
            t_final: num(&map, "T")?,
            stride: num(&map, "stride")?,
            r: num(&map, "R")?,
            delta: num(&map, "delta")?,
            perturbation: map["perturbation"].parse()?,
            kappa: if map.contains_key("kappa") { Some(num(&map, "kappa")?) } else { None },
            nu: if map.contains_key("nu") { num(&map, "nu")? } else { 1.0 },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "gamma = {}\nL = {}\nn = {}\ndt = {}\nT = {}\nstride = {}\nR = {}\ndelta = {}\nperturbation = {}\n",
            self.gamma, self.l, self.n, self.dt, self.t_final, self.stride, self.r, self.delta, self.perturbation
        );
        if let Some(k) = self.kappa {
            s.push_str(&format!("kappa = {k}\n"));
        }
        s.push_str(&format!("nu = {}\n", self.nu));
        s
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        let grid = self.grid()?;
        self.evolve_config().validate(&grid)?;
        if self.stride == 0 {
            return Err(Error::Invalid("stride must be positive".into()));
        }
        if !(self.delta >= 0.0 && self.delta <= 0.1) {
            return Err(Error::Invalid(format!("delta must lie in [0, 0.1] (got {})", self.delta)));
        }
        if !(self.r > 0.0 && self.r < self.l) {
            return Err(Error::Invalid(format!("R must lie in (0, L) (got {})", self.r)));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0) {
                return Err(Error::Invalid(format!("kappa must be positive (got {k})")));
            }
        }
        if !(self.nu > 0.0) {
            return Err(Error::Invalid(format!("nu must be positive (got {})", self.nu)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.l, self.n)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa.unwrap_or_else(|| (self.gamma - 1.0).sqrt().min(2f64.sqrt()))
    }

    pub fn evolve_config(&self) -> EvolveConfig {
        EvolveConfig::new(self.dt, self.t_final)
    }
}

/// Additive perturbation shape, before normalization.
fn shape(kind: PerturbationKind, grid: Grid) -> ComplexPair {
    let bump = |x0: f64, w: f64| grid.sample(|x| (-((x - x0) / w).powi(2)).exp());
    match kind {
        PerturbationKind::BumpReal | PerturbationKind::BumpImag => {
            let c = if kind == PerturbationKind::BumpReal { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
            let b: Vec<Complex64> = bump(0.0, 1.0).into_iter().map(|v| c * v).collect();
            ComplexPair { grid, psi1: b.clone(), psi2: b }
        }
        PerturbationKind::RandomSmooth(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = ComplexPair::zeros(grid);
            for j in 0..2 {
                for _ in 0..3 {
                    let x0 = rng.random_range(-8.0..8.0);
                    let w = rng.random_range(0.5..2.0);
                    let amp = Complex64::from_polar(rng.random_range(0.2..1.0), rng.random_range(0.0..std::f64::consts::TAU));
                    let b = bump(x0, w);
                    for (z, v) in p.component_mut(j).iter_mut().zip(b) {
                        *z += amp * v;
                    }
                }
            }
            p
        }
        PerturbationKind::KickPhase => unreachable!("phase kick is not additive"),
    }
}

fn perturbed(profile: &WallProfile, kind: PerturbationKind, s: f64) -> ComplexPair {
    let mut psi = profile.as_state();
    if kind == PerturbationKind::KickPhase {
        let rot = Complex64::from_polar(1.0, s);
        psi.psi1.iter_mut().for_each(|z| *z *= rot);
        return psi;
    }
    let p = shape(kind, profile.grid);
    let n = psi.grid.len();
    for j in 0..2 {
        let src = p.component(j).to_vec();
        // Boundary nodes keep the far-field values.
        for (i, z) in psi.component_mut(j).iter_mut().enumerate().take(n - 1).skip(1) {
            *z += s * src[i];
        }
    }
    psi
}

/// `Psi_0` with `rho_R(Psi_0, U) = delta`, and the amplitude used.
pub fn initial_state(profile: &WallProfile, kind: PerturbationKind, delta: f64, r: f64) -> Result<(ComplexPair, f64)> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Invalid(format!("delta must be nonnegative (got {delta})")));
    }
    let u = profile.as_state();
    let rho = |s: f64| rho_r(&perturbed(profile, kind, s), &u, r, profile);
    if delta == 0.0 {
        return Ok((u, 0.0));
    }
    let probe = 1e-6;
    let (mut s0, mut f0) = (0.0, -delta);
    let mut s1 = delta * probe / rho(probe)?;
    let mut f1 = rho(s1)? - delta;
    for _ in 0..60 {
        if f1.abs() <= 1e-13 * delta {
            return Ok((perturbed(profile, kind, s1), s1));
        }
        let s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
        (s0, f0) = (s1, f1);
        s1 = s2;
        f1 = rho(s1)? - delta;
    }
    Err(Error::NonConvergence { residual: f1.abs() })
}

/// Terms of the energy lower-bound chain with their measured constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateTerms {
    /// `|int_R^inf eta1 (2 u2 v2 + v2^2 + w2^2)| / ((e^{-k R} p + p^2) ||eta1||)`.
    pub right_cross: f64,
    /// The mirror term on `(-inf, -R]` with `eta2`.
    pub left_cross: f64,
    /// `|int_{-R}^{R} N_3| / ||V + iW||_{H^1(-R,R)}^3`.
    pub cubic: f64,
    /// `||V + iW||_{H^1(-R,R)} / (e^{k R} ||V + iW||_H)`.
    pub inner_embedding: f64,
    /// `Lambda_+ ||V||_H^2 + Lambda_- ||W||_H^2 + 1/2 sum ||eta_j||^2` when
    /// the coercivity constants are supplied.
    pub quadratic_lower: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    /// `||V + iW||_H^2 + ||eta1||^2 + ||eta2||^2` on `|x| >= R`.
    pub lhs: f64,
    /// `E(U + V + iW) - E(U)`.
    pub rhs: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
    pub terms: EstimateTerms,
}

fn ratio_or_zero(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn h1_real_on(f: &[f64], h: f64, seg: Segment) -> f64 {
    (gradient_form_real_on(f, f, h, seg) + seg.integrate(h, |i| f[i] * f[i])).max(0.0).sqrt()
}

/// Outer `L^2` norms of `eta1`, `eta2` on `|x| >= R`.
fn eta_outer(pert: &Perturbation, r: f64) -> [f64; 2] {
    let grid = pert.profile.grid;
    let eta = eta_of(pert);
    let outer = grid.outer(r);
    [0, 1].map(|j| {
        let e = eta.component(j);
        outer.iter().map(|s| s.integrate(grid.h(), |i| e[i] * e[i])).sum::<f64>().sqrt()
    })
}

pub fn coercivity_control_check(
    pert: &Perturbation,
    r: f64,
    constants: Option<&CoercivityConstants>,
) -> Result<ControlRecord> {
    let p = pert.profile;
    let grid = p.grid;
    if !(r > 0.0 && r < grid.half_width()) {
        return Err(Error::Invalid(format!("R must lie in (0, L) (got {r})")));
    }
    let res = orthogonality_residuals(&pert.v, &pert.w, p);
    let worst = res.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if worst > TOL_MOD {
        return Err(Error::OrthogonalityViolated { residual: worst });
    }
    let h = grid.h();
    let g = p.gamma;
    let kappa = p.coupling().kappa();
    let pn = pert.h_norm();
    let eo = eta_outer(pert, r);
    let lhs = pn * pn + eo[0] * eo[0] + eo[1] * eo[1];
    let rhs = energy(&pert.state(), g)? - energy(&p.as_state(), g)?;

    let eta = eta_of(pert);
    let [left, right] = grid.outer(r);
    let (v, w) = (&pert.v, &pert.w);
    let cross = |seg: Segment, j: usize, other: &[f64]| {
        let u = p.component(1 - j);
        let (vv, ww) = (v.component(1 - j), w.component(1 - j));
        seg.integrate(h, |i| other[i] * (2.0 * u[i] * vv[i] + vv[i] * vv[i] + ww[i] * ww[i])).abs()
    };
    let scale = (-kappa * r).exp() * pn + pn * pn;
    let right_cross = ratio_or_zero(cross(right, 0, &eta.eta1), scale * eo[0]);
    let left_cross = ratio_or_zero(cross(left, 1, &eta.eta2), scale * eo[1]);

    let inner = grid.inner(r);
    let n3 = inner
        .integrate(h, |i| {
            let s1 = v.f1[i] * v.f1[i] + w.f1[i] * w.f1[i];
            let s2 = v.f2[i] * v.f2[i] + w.f2[i] * w.f2[i];
            let (a, b, x, y) = (p.u1[i], p.u2[i], v.f1[i], v.f2[i]);
            2.0 * s1 * (a * x + g * b * y) + 2.0 * s2 * (g * a * x + b * y)
        })
        .abs();
    let h1_inner = [&v.f1, &v.f2, &w.f1, &w.f2].iter().map(|f| h1_real_on(f, h, inner).powi(2)).sum::<f64>().sqrt();
    let cubic = ratio_or_zero(n3, h1_inner.powi(3));
    let inner_embedding = ratio_or_zero(h1_inner, (kappa * r).exp() * pn);
    let quadratic_lower = constants.map(|c| {
        let nv = h_norm_real(v, p);
        let nw = h_norm_real(w, p);
        c.lambda_plus_r * nv * nv + c.lambda_minus * nw * nw + 0.5 * (eo[0] * eo[0] + eo[1] * eo[1])
    });
    Ok(ControlRecord {
        lhs,
        rhs,
        ratio: ratio_or_zero(lhs, rhs),
        terms: EstimateTerms { right_cross, left_cross, cubic, inner_embedding, quadratic_lower },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    /// `||v2||_{H^1(R,inf)} / ||V||_H`.
    pub v2_ratio: f64,
    /// `||w2||_{H^1(R,inf)} / ||W||_H`.
    pub w2_ratio: f64,
    /// The larger of the two ratios.
    pub c_gamma: f64,
    /// `||v2 + i w2||_{L^inf(R,inf)} / ||V + iW||_H`.
    pub linf_ratio: f64,
    /// `||v2 + i w2||_{L^inf(R,inf)} / ||v2 + i w2||_{H^1(R,inf)}`.
    pub c_emb: f64,
    pub finite: bool,
}

pub fn embedding_outer_check(pert: &Perturbation, r: f64) -> Result<EmbeddingRecord> {
    let p = pert.profile;
    let grid = p.grid;
    if !(r > 0.0 && r < grid.half_width()) {
        return Err(Error::Invalid(format!("R must lie in (0, L) (got {r})")));
    }
    let h = grid.h();
    let right = grid.outer(r)[1];
    let (v2, w2) = (&pert.v.f2, &pert.w.f2);
    let hv = h1_real_on(v2, h, right);
    let hw = h1_real_on(w2, h, right);
    let v2_ratio = ratio_or_zero(hv, h_norm_real(&pert.v, p));
    let w2_ratio = ratio_or_zero(hw, h_norm_real(&pert.w, p));
    let sup = (right.start..=right.end).map(|i| v2[i].hypot(w2[i])).fold(0.0, f64::max);
    let linf_ratio = ratio_or_zero(sup, pert.h_norm());
    let c_emb = ratio_or_zero(sup, (hv * hv + hw * hw).sqrt());
    let c_gamma = v2_ratio.max(w2_ratio);
    let finite = [v2_ratio, w2_ratio, linf_ratio, c_emb].iter().all(|x| x.is_finite());
    Ok(EmbeddingRecord { v2_ratio, w2_ratio, c_gamma, linf_ratio, c_emb, finite })
}

/// One sampled time of a stability run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: f64,
    pub alpha: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub residual: [f64; 3],
    /// `rho_R(Psi(t), fitted orbit point)`.
    pub rho: f64,
    /// `E(Psi(t)) - E(U)`.
    pub energy_gap: f64,
    /// `(|alpha| + |theta1| + |theta2|) / max(1, |t|)`.
    pub ratio: f64,
    /// Left side of the ball condition for the fitted `V + iW`.
    pub ball_lhs: f64,
    pub control_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub config: ExperimentConfig,
    /// `rho_R(Psi_0, U)`.
    pub delta_measured: f64,
    /// `sup_t rho_R(Psi(t), fitted orbit)`.
    pub epsilon_measured: f64,
    /// Smallest `C` with `|alpha| + |theta1| + |theta2| <= C delta max(1, |t|)`
    /// at every sample (the raw ratio when `delta = 0`).
    pub c_growth: f64,
    /// `E(Psi_0) - E(U)`.
    pub energy_gap: f64,
    /// `max_t |gap(t) - gap(0)| / max(1, |E(Psi_0)|)`.
    pub energy_gap_drift: f64,
    /// `sup_t` of the control ratio over the samples.
    pub coercivity_ratio: f64,
    pub amplitude: f64,
    pub constants: CoercivityConstants,
    pub max_rate: f64,
    pub max_orthogonality_residual: f64,
    /// `nu e^{-3 kappa R}`.
    pub ball_radius: f64,
    pub ball_initial: bool,
    pub ball_all: bool,
    pub series: Vec<SnapshotRecord>,
}

impl StabilityReport {
    pub fn epsilon_ratio(&self) -> f64 {
        ratio_or_zero(self.epsilon_measured, self.delta_measured)
    }
}

/// Runs an experiment on a precomputed profile and constants.
pub fn run_stability_on(
    config: &ExperimentConfig,
    profile: &WallProfile,
    constants: CoercivityConstants,
) -> Result<StabilityReport> {
    config.validate()?;
    if profile.grid != config.grid()? || profile.gamma != config.gamma {
        return Err(Error::Invalid("profile does not match the configuration".into()));
    }
    let r = config.r;
    let g = config.gamma;
    let u = profile.as_state();
    let e_u = energy(&u, g)?;
    let (psi0, amplitude) = initial_state(profile, config.perturbation, config.delta, r)?;
    let delta_measured = rho_r(&psi0, &u, r, profile)?;
    let ball_radius = config.nu * (-3.0 * config.kappa() * r).exp();
    let mut tracker = Tracker::new(profile)?;
    let mut series = Vec::new();
    evolve_with(&psi0, g, &config.evolve_config(), config.stride, |t, psi, e| {
        let state = tracker.push(t, psi)?;
        let rec: &TrackRecord = tracker.records.last().expect("pushed");
        let orbit = translate_gauge(profile, state.alpha, state.theta1, state.theta2)?;
        let rot = Complex64::from_polar(1.0, t);
        let rho = rho_r(&psi.rotated(rot, rot), &orbit, r, profile)?;
        let pert = Perturbation::new(profile, state.v, state.w)?;
        let eo = eta_outer(&pert, r);
        let ball_lhs = pert.h_norm() + eo[0] + eo[1];
        let control = coercivity_control_check(&pert, r, None)?;
        series.push(SnapshotRecord {
            t,
            alpha: rec.alpha,
            theta1: rec.theta1,
            theta2: rec.theta2,
            residual: rec.residual,
            rho,
            energy_gap: e - e_u,
            ratio: rec.ratio(),
            ball_lhs,
            control_ratio: control.ratio,
        });
        Ok(())
    })?;
    let tracking = tracker.finish();
    let first = series[0];
    let e_scale = (first.energy_gap + e_u).abs().max(1.0);
    let fold = |f: fn(&SnapshotRecord) -> f64| series.iter().map(f).fold(0.0, f64::max);
    let growth = tracking.growth;
    Ok(StabilityReport {
        config: *config,
        delta_measured,
        epsilon_measured: fold(|s| s.rho),
        c_growth: if config.delta > 0.0 { growth / config.delta } else { growth },
        energy_gap: first.energy_gap,
        energy_gap_drift: series.iter().map(|s| (s.energy_gap - first.energy_gap).abs()).fold(0.0, f64::max) / e_scale,
        coercivity_ratio: fold(|s| s.control_ratio),
        amplitude,
        constants,
        max_rate: tracking.max_rate(),
        max_orthogonality_residual: fold(|s| s.residual.iter().map(|x| x.abs()).fold(0.0, f64::max)),
        ball_radius,
        ball_initial: first.ball_lhs <= ball_radius,
        ball_all: series.iter().all(|s| s.ball_lhs <= ball_radius),
        series,
    })
}

pub fn run_stability(config: &ExperimentConfig) -> Result<StabilityReport> {
    config.validate()?;
    let profile = solve_profile(config.gamma, &config.grid()?, 1e-10)?;
    let constants = coercivity_constants_on(&profile, config.r)?;
    run_stability_on(config, &profile, constants)
}

/// Runs experiments sharing `(gamma, L, n, R)` concurrently; results keep
/// the input order.
pub fn run_sweep(configs: &[ExperimentConfig]) -> Result<Vec<StabilityReport>> {
    let Some(first) = configs.first() else { return Ok(Vec::new()) };
    first.validate()?;
    if configs.iter().any(|c| c.gamma != first.gamma || c.l != first.l || c.n != first.n || c.r != first.r) {
        return Err(Error::Invalid("sweep configurations must share gamma, L, n and R".into()));
    }
    let profile = solve_profile(first.gamma, &first.grid()?, 1e-10)?;
    let constants = coercivity_constants_on(&profile, first.r)?;
    configs.par_iter().map(|c| run_stability_on(c, &profile, constants)).collect()
}

/// `(0, v2)` shaped as a bump at `x0` on the second component only.
pub fn second_component_bump(grid: Grid, x0: f64, width: f64) -> RealPair {
    RealPair { grid, f1: vec![0.0; grid.len()], f2: grid.sample(|x| (-((x - x0) / width).powi(2)).exp()) }
}

/// `||Psi - U||_H` of a state.
pub fn h_distance(psi: &ComplexPair, profile: &WallProfile) -> Result<f64> {
    h_norm(&psi.sub(&profile.as_state())?, profile)
}
