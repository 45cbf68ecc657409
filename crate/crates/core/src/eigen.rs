//! Lowest eigenpairs of a banded symmetric pencil `A x = lambda B x` with
//! `B` positive definite.
//!
//! Shift-invert block Krylov with Rayleigh-Ritz and restarts. The shift is
//! lowered until `A - sigma B` is positive definite (checked by inertia),
//! so the wanted eigenvalues are the dominant ones of `(A - sigma B)^{-1} B`.
//! A final inertia count confirms that no eigenvalue below the returned
//! ones was skipped.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{Ldlt, SymBandMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigOptions {
    /// Target relative residual `||A x - t B x|| / ||B x||`.
    pub tol: f64,
    /// Residual accepted when the iteration budget runs out.
    pub accept: f64,
    pub max_outer: usize,
    pub krylov_steps: usize,
    /// Block size beyond the number of wanted pairs.
    pub extra: usize,
    pub sigma0: f64,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { tol: 1e-10, accept: 1e-8, max_outer: 60, krylov_steps: 8, extra: 6, sigma0: -0.5, seed: 0x5eed }
    }
}

#[derive(Debug, Clone)]
pub struct PencilEigs {
    pub values: Vec<f64>,
    /// `B`-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub sigma: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Number of eigenvalues of the pencil strictly below `t`, or `None` when
/// `A - t B` is numerically singular.
pub fn count_below(a: &SymBandMatrix, b: &SymBandMatrix, t: f64) -> Option<usize> {
    a.add_scaled(-t, b).ldlt().ok().map(|f| f.negative_count())
}

/// Lowers the shift until `A - sigma B` is positive definite.
fn positive_shift(a: &SymBandMatrix, b: &SymBandMatrix, sigma0: f64) -> Result<(f64, Ldlt)> {
    let mut sigma = sigma0;
    let mut step = 1.0;
    let mut nudge = 0.1;
    for _ in 0..80 {
        match a.add_scaled(-sigma, b).ldlt() {
            Ok(f) if f.negative_count() == 0 => return Ok((sigma, f)),
            Ok(_) => {
                sigma -= step;
                step *= 2.0;
            }
            Err(_) => {
                sigma += nudge;
                nudge = -1.5 * nudge;
            }
        }
    }
    Err(Error::FactorizationSingular { sigma })
}

/// `B`-orthogonalizes `y` against `basis` (two passes) and normalizes it.
/// Returns `None` when nothing independent is left.
fn b_orthonormalize(y: &mut Vec<f64>, basis: &[Vec<f64>], bbasis: &[Vec<f64>], b: &SymBandMatrix) -> Option<Vec<f64>> {
    let start = b.apply(y).iter().zip(y.iter()).map(|(p, q)| p * q).sum::<f64>().sqrt();
    for _ in 0..2 {
        for (q, bq) in basis.iter().zip(bbasis) {
            let c = dot(bq, y);
            for (yi, qi) in y.iter_mut().zip(q) {
                *yi -= c * qi;
            }
        }
    }
    let by = b.apply(y);
    let nb = dot(&by, y).max(0.0).sqrt();
    if !(nb > 1e-10 * start) || !nb.is_finite() {
        return None;
    }
    y.iter_mut().for_each(|v| *v /= nb);
    Some(by.into_iter().map(|v| v / nb).collect())
}

fn fix_sign(x: &mut [f64]) {
    let k = x
        .iter()
        .enumerate()
        .max_by(|p, q| p.1.abs().total_cmp(&q.1.abs()))
        .map(|(k, _)| k)
        .unwrap_or(0);
    if x[k] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

struct Ritz {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn rayleigh_ritz(a: &SymBandMatrix, q: &[Vec<f64>], bq: &[Vec<f64>], keep: usize) -> Result<Ritz> {
    let k = q.len();
    let aq: Vec<Vec<f64>> = q.iter().map(|v| a.apply(v)).collect();
    let ah = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&q[i], &aq[j]) + dot(&q[j], &aq[i])));
    let bh = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&q[i], &bq[j]) + dot(&q[j], &bq[i])));
    let chol = bh.cholesky().ok_or(Error::NoConvergence { iterations: 0, residual: f64::NAN })?;
    let l = chol.l();
    let linv_a = l.solve_lower_triangular(&ah).expect("triangular");
    let c = l.solve_lower_triangular(&linv_a.transpose()).expect("triangular");
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt = l.transpose();
    let n = q[0].len();
    let mut values = Vec::with_capacity(keep);
    let mut vectors = Vec::with_capacity(keep);
    for &o in order.iter().take(keep) {
        let z = eig.eigenvectors.column(o).into_owned();
        let y = lt.solve_upper_triangular(&z).expect("triangular");
        let mut x = vec![0.0; n];
        for (coef, col) in y.iter().zip(q) {
            for (xi, ci) in x.iter_mut().zip(col) {
                *xi += coef * ci;
            }
        }
        values.push(eig.eigenvalues[o]);
        vectors.push(x);
    }
    Ok(Ritz { values, vectors })
}

fn residual(a: &SymBandMatrix, b: &SymBandMatrix, x: &[f64], t: f64) -> f64 {
    let ax = a.apply(x);
    let bx = b.apply(x);
    let r: f64 = ax.iter().zip(&bx).map(|(p, q)| (p - t * q).powi(2)).sum::<f64>().sqrt();
    r / norm(&bx)
}

fn iterate(a: &SymBandMatrix, b: &SymBandMatrix, m: usize, p: usize, opts: &EigOptions) -> Result<PencilEigs> {
    let n = a.dim();
    let p = p.min(n);
    let m = m.min(p);
    let (sigma, fac) = positive_shift(a, b, opts.sigma0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();

    let mut best = f64::INFINITY;
    let mut last: Option<(Ritz, Vec<f64>)> = None;
    for _outer in 0..opts.max_outer {
        let mut q: Vec<Vec<f64>> = Vec::new();
        let mut bq: Vec<Vec<f64>> = Vec::new();
        let mut frontier: Vec<usize> = Vec::new();
        for mut y in block.drain(..) {
            if let Some(by) = b_orthonormalize(&mut y, &q, &bq, b) {
                frontier.push(q.len());
                q.push(y);
                bq.push(by);
            }
        }
        let max_dim = (p * opts.krylov_steps).min(n);
        for _ in 1..opts.krylov_steps {
            let mut next = Vec::new();
            for &k in &frontier {
                if q.len() >= max_dim {
                    break;
                }
                let mut y = bq[k].clone();
                fac.solve_in_place(&mut y);
                if let Some(by) = b_orthonormalize(&mut y, &q, &bq, b) {
                    next.push(q.len());
                    q.push(y);
                    bq.push(by);
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        let keep = p.min(q.len());
        let ritz = rayleigh_ritz(a, &q, &bq, keep)?;
        let res: Vec<f64> = (0..m.min(keep)).map(|i| residual(a, b, &ritz.vectors[i], ritz.values[i])).collect();
        let worst = res.iter().cloned().fold(0.0, f64::max);
        best = best.min(worst);
        let done = worst <= opts.tol || q.len() == n;
        block = ritz.vectors.clone();
        last = Some((ritz, res));
        if done {
            break;
        }
    }
    let (ritz, res) = last.expect("at least one iteration");
    let worst = res.iter().cloned().fold(0.0, f64::max);
    if !(worst <= opts.accept) {
        return Err(Error::NoConvergence { iterations: opts.max_outer, residual: worst.min(best) });
    }

    // Any eigenvalue below the last returned one must have been found.
    let theta_m = ritz.values[m - 1];
    let mut delta = 1e-7 * theta_m.abs().max(1.0);
    let found = loop {
        match count_below(a, b, theta_m + delta) {
            Some(c) => break c,
            None => delta *= 1.7,
        }
    };
    let expected = ritz.values.iter().filter(|&&t| t < theta_m + delta).count();
    if found != expected {
        return Err(Error::NoConvergence { iterations: opts.max_outer, residual: f64::NAN });
    }

    let mut vectors: Vec<Vec<f64>> = ritz.vectors.into_iter().take(m).collect();
    vectors.iter_mut().for_each(|v| fix_sign(v));
    Ok(PencilEigs { values: ritz.values[..m].to_vec(), vectors, residuals: res, sigma })
}

/// The `m` smallest eigenpairs of `A x = lambda B x`.
pub fn lowest_pencil(a: &SymBandMatrix, b: &SymBandMatrix, m: usize, opts: &EigOptions) -> Result<PencilEigs> {
    if a.dim() != b.dim() {
        return Err(Error::LengthMismatch { expected: a.dim(), got: b.dim() });
    }
    if m == 0 || m > a.dim() {
        return Err(Error::Invalid(format!("cannot request {m} eigenpairs of a {}-dimensional pencil", a.dim())));
    }
    b.ldlt()
        .ok()
        .filter(|f| f.negative_count() == 0)
        .ok_or_else(|| Error::Invalid("mass matrix is not positive definite".into()))?;
    let mut p = m + opts.extra;
    let mut last = None;
    // A skipped eigenvalue usually means the block was too small.
    for _ in 0..3 {
        match iterate(a, b, m, p, opts) {
            Ok(r) => return Ok(r),
            Err(e @ Error::NoConvergence { .. }) => {
                last = Some(e);
                p *= 2;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("loop ran"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirichlet_laplacian(n: usize, h: f64) -> (SymBandMatrix, SymBandMatrix) {
        let mut a = SymBandMatrix::zeros(n, 1);
        let mut b = SymBandMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0 / (h * h));
            if i > 0 {
                a.add(i, i - 1, -1.0 / (h * h));
            }
            b.add(i, i, 1.0);
        }
        (a, b)
    }

    #[test]
    fn laplacian_eigenvalues() {
        let n = 400;
        let h = 1.0 / (n + 1) as f64;
        let (a, b) = dirichlet_laplacian(n, h);
        let r = lowest_pencil(&a, &b, 5, &EigOptions::default()).unwrap();
        for (k, lam) in r.values.iter().enumerate() {
            let s = ((k + 1) as f64 * std::f64::consts::PI * h / 2.0).sin();
            let exact = 4.0 / (h * h) * s * s;
            assert!((lam - exact).abs() < 1e-8 * exact, "{lam} vs {exact}");
        }
        assert!(r.residuals.iter().all(|&x| x <= 1e-8));
    }

    #[test]
    fn negative_spectrum_lowers_shift() {
        let n = 200;
        let h = 1.0 / (n + 1) as f64;
        let (mut a, b) = dirichlet_laplacian(n, h);
        for i in 0..n {
            a.add(i, i, -1.0e3);
        }
        let r = lowest_pencil(&a, &b, 2, &EigOptions::default()).unwrap();
        assert!(r.values[0] < -900.0);
        assert!(r.sigma < r.values[0]);
    }

    #[test]
    fn double_eigenvalue_found() {
        // Two decoupled copies of the same chain.
        let n = 150;
        let h = 1.0 / (n + 1) as f64;
        let (a1, _) = dirichlet_laplacian(n, h);
        let mut a = SymBandMatrix::zeros(2 * n, 2);
        let mut b = SymBandMatrix::zeros(2 * n, 2);
        for i in 0..n {
            for c in 0..2 {
                a.add(2 * i + c, 2 * i + c, a1.get(i, i));
                if i > 0 {
                    a.add(2 * i + c, 2 * (i - 1) + c, a1.get(i, i - 1));
                }
                b.add(2 * i + c, 2 * i + c, 1.0);
            }
        }
        let r = lowest_pencil(&a, &b, 4, &EigOptions::default()).unwrap();
        assert!((r.values[0] - r.values[1]).abs() < 1e-8 * r.values[0]);
        assert!((r.values[2] - r.values[3]).abs() < 1e-8 * r.values[2]);
        for i in 0..4 {
            for j in 0..4 {
                let g = dot(&r.vectors[i], &b.apply(&r.vectors[j]));
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-10);
            }
        }
    }
}
