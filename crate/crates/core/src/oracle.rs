//! Dense reference eigensolver for the symmetric operators, used to check
//! the banded solver.
//!
//! The mirror symmetry `u2(x) = u1(-x)` splits each `2n x 2n` pencil into two
//! `n x n` pencils: `L-` and `K` decouple by component, and for `L+`, `L_R`
//! the map `S (f1, f2)(x) = (f2, f1)(-x)` splits the space into its `+1` and
//! `-1` eigenspaces. Each reduced pencil is brought to standard form with
//! the bidiagonal Cholesky factor of the reduced `K` and solved by a full
//! symmetric eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::SymBandMatrix;
use crate::profile::WallProfile;
use crate::spectral::{potential, OperatorKind};

/// Stiffness plus trapezoid-weighted scalar potential, as a dense matrix.
fn scalar_dense(profile: &WallProfile, pot: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let grid = profile.grid;
    let n = grid.len();
    let h = grid.h();
    let w = grid.trapezoid_weights();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i)] += 1.0 / h;
        a[(i + 1, i + 1)] += 1.0 / h;
        a[(i, i + 1)] -= 1.0 / h;
        a[(i + 1, i)] -= 1.0 / h;
    }
    for i in 0..n {
        a[(i, i)] += w[i] * pot(i);
    }
    a
}

/// Cholesky factor of a tridiagonal positive-definite matrix, as
/// `(diagonal, subdiagonal)`.
fn bidiagonal_cholesky(b: &SymBandMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = b.dim();
    let mut d = vec![0.0; n];
    let mut s = vec![0.0; n.saturating_sub(1)];
    for i in 0..n {
        let mut v = b.get(i, i);
        if i > 0 {
            s[i - 1] = b.get(i, i - 1) / d[i - 1];
            v -= s[i - 1] * s[i - 1];
        }
        if !(v > 0.0) {
            return Err(Error::Invalid("reduced K is not positive definite".into()));
        }
        d[i] = v.sqrt();
    }
    Ok((d, s))
}

/// `L^{-1} M` column by column for bidiagonal `L`.
fn forward_solve(d: &[f64], s: &[f64], m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.len();
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let mut col = out.column_mut(j);
        col[0] /= d[0];
        for i in 1..n {
            col[i] = (col[i] - s[i - 1] * col[i - 1]) / d[i];
        }
    }
    out
}

/// All eigenvalues of the scalar pencil `(a, b)` with tridiagonal `b`,
/// ascending.
fn dense_pencil(a: &DMatrix<f64>, b: &SymBandMatrix) -> Result<Vec<f64>> {
    let (d, s) = bidiagonal_cholesky(b)?;
    let x = forward_solve(&d, &s, a);
    let c = forward_solve(&d, &s, &x.transpose());
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

fn reduced_k(profile: &WallProfile) -> SymBandMatrix {
    let grid = profile.grid;
    let n = grid.len();
    let h = grid.h();
    let w = grid.trapezoid_weights();
    let mut b = SymBandMatrix::zeros(n, 1);
    for i in 0..n - 1 {
        b.add(i, i, 1.0 / h);
        b.add(i + 1, i + 1, 1.0 / h);
        b.add(i + 1, i, -1.0 / h);
    }
    for i in 0..n {
        b.add(i, i, w[i] * potential(OperatorKind::K, profile, i)[0][0]);
    }
    b
}

/// The `m` lowest eigenvalues of `(op, K)` by dense linear algebra.
///
/// Requires the exact mirror symmetry of profiles from
/// [`crate::profile::solve_profile`].
pub fn dense_lowest(kind: OperatorKind, profile: &WallProfile, m: usize) -> Result<Vec<f64>> {
    let grid = profile.grid;
    let n = grid.len();
    if (0..n).any(|i| profile.u1[i] != profile.u2[grid.mirror(i)]) {
        return Err(Error::Invalid("dense oracle needs a mirror-symmetric profile".into()));
    }
    let k = reduced_k(profile);
    let mut all = match kind {
        OperatorKind::Lminus => {
            let a = scalar_dense(profile, |i| potential(kind, profile, i)[0][0]);
            let ev = dense_pencil(&a, &k)?;
            ev.iter().flat_map(|&v| [v, v]).collect::<Vec<f64>>()
        }
        OperatorKind::Lplus | OperatorKind::LR(_) => {
            let a11 = scalar_dense(profile, |i| potential(kind, profile, i)[0][0]);
            let w = grid.trapezoid_weights();
            let mut out = Vec::with_capacity(2 * n);
            for sign in [1.0, -1.0] {
                let mut a = a11.clone();
                for i in 0..n {
                    a[(i, grid.mirror(i))] += sign * w[i] * potential(kind, profile, i)[0][1];
                }
                out.extend(dense_pencil(&a, &k)?);
            }
            out
        }
        OperatorKind::K => return Err(Error::Invalid("the dense oracle solves (L, K) pencils".into())),
    };
    all.sort_by(f64::total_cmp);
    all.truncate(m);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::profile::solve_profile;
    use crate::spectral::{assemble, lowest_eigs};

    #[test]
    fn matches_banded_solver_on_small_grid() {
        let p = solve_profile(2.0, &Grid::new(30.0, 401).unwrap(), 1e-10).unwrap();
        let k = assemble(OperatorKind::K, &p).unwrap();
        for kind in [OperatorKind::Lminus, OperatorKind::Lplus, OperatorKind::LR(3.0)] {
            let dense = dense_lowest(kind, &p, 4).unwrap();
            let banded = lowest_eigs(&assemble(kind, &p).unwrap(), &k, 4).unwrap().eigenvalues;
            for (a, b) in dense.iter().zip(&banded) {
                assert!((a - b).abs() < 1e-9, "{kind:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn full_dense_check_without_symmetry_reduction() {
        // Unreduced 2n x 2n generalized problem on a tiny grid.
        let p = solve_profile(3.0, &Grid::new(16.0, 161).unwrap(), 1e-10).unwrap();
        let lp = assemble(OperatorKind::Lplus, &p).unwrap().matrix.to_dense();
        let k = assemble(OperatorKind::K, &p).unwrap().matrix.to_dense();
        let l = k.cholesky().unwrap().l();
        let x = l.solve_lower_triangular(&lp).unwrap();
        let c = l.solve_lower_triangular(&x.transpose()).unwrap();
        let mut ev: Vec<f64> = SymmetricEigen::new((&c + c.transpose()) * 0.5).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let reduced = dense_lowest(OperatorKind::Lplus, &p, 5).unwrap();
        for (a, b) in ev.iter().zip(&reduced) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
