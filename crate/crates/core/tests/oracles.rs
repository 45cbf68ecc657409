use dwlab_core::modulation::{rate_forcing, ModulationState, TOL_MOD};
use dwlab_core::oracle::dense_lowest;
use dwlab_core::spectral::{
    continuation_sweep_on, decoupled_eigs, eigen_count_below, rayleigh_spot_check, stack, sturm_monotonicity_check,
};
use dwlab_core::stability::run_sweep;
use dwlab_core::*;

fn wall(n: usize) -> WallProfile {
    solve_profile(2.0, &Grid::new(30.0, n).unwrap(), 1e-10).unwrap()
}

#[test]
fn banded_matches_dense_for_every_operator() {
    let p = wall(401);
    let k = assemble(OperatorKind::K, &p).unwrap();
    for kind in [OperatorKind::Lminus, OperatorKind::Lplus, OperatorKind::LR(4.0), OperatorKind::LR(0.9)] {
        let banded = lowest_eigs(&assemble(kind, &p).unwrap(), &k, 4).unwrap().eigenvalues;
        let dense = dense_lowest(kind, &p, 4).unwrap();
        for (b, d) in banded.iter().zip(&dense) {
            assert!((b - d).abs() < 1e-9, "{kind:?}: {banded:?} vs {dense:?}");
        }
    }
}

#[test]
fn eigenpairs_are_k_orthonormal_with_small_residuals() {
    let p = wall(801);
    let k = assemble(OperatorKind::K, &p).unwrap();
    for kind in [OperatorKind::Lminus, OperatorKind::Lplus, OperatorKind::LR(6.0)] {
        let op = assemble(kind, &p).unwrap();
        let r = lowest_eigs(&op, &k, 4).unwrap();
        assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for a in 0..4 {
            let x = &r.eigenvectors[a];
            for b in 0..4 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((k.form_stacked(x, &r.eigenvectors[b]) - want).abs() < 1e-8);
            }
            let ax = op.apply_stacked(x);
            let kx = k.apply_stacked(x);
            let res: f64 = ax.iter().zip(&kx).map(|(p, q)| (p - r.eigenvalues[a] * q).powi(2)).sum::<f64>().sqrt();
            let kn: f64 = kx.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * kn, "{kind:?} mode {a}: {res:e}");
        }
    }
}

#[test]
fn no_spurious_negative_spectrum_and_rayleigh_bounds() {
    let p = wall(801);
    let k = assemble(OperatorKind::K, &p).unwrap();
    let lm = assemble(OperatorKind::Lminus, &p).unwrap();
    let lp = assemble(OperatorKind::Lplus, &p).unwrap();
    assert_eq!(eigen_count_below(&lm, &k, -1e-6), Some(0));
    assert_eq!(eigen_count_below(&lp, &k, -1e-6), Some(0));
    let em = lowest_eigs(&lm, &k, 3).unwrap();
    let rep = rayleigh_spot_check(&lm, &k, &em.eigenvectors[..2], em.eigenvalues[2], 50, 1);
    assert_eq!(rep.passed, 50, "{rep:?}");
    let ep = lowest_eigs(&lp, &k, 2).unwrap();
    let rep = rayleigh_spot_check(&lp, &k, &ep.eigenvectors[..1], ep.eigenvalues[1], 50, 2);
    assert_eq!(rep.passed, 50, "{rep:?}");
}

#[test]
fn decoupled_first_component_has_zero_mode() {
    let p = wall(801);
    let v = decoupled_eigs(1, &p, 2).unwrap();
    assert!(v[0].abs() < 1e-6 && v[1] > 0.1, "{v:?}");
}

#[test]
fn sturm_potential_decreases_in_lambda() {
    let p = wall(801);
    let rep = sturm_monotonicity_check(&p, &[-0.5, -0.2, 0.0, 0.3, 0.6]).unwrap();
    assert!(rep.pointwise_monotone && rep.mu_nonincreasing, "{rep:?}");
    assert!(rep.mu_zero.unwrap().abs() < 1e-6);
}

#[test]
fn continuation_tail_halves_past_the_median() {
    let p = wall(1501);
    let rs = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
    for c in continuation_sweep_on(&p, 3, &rs).unwrap() {
        let mid = c.samples[c.samples.len() / 2].1;
        let last = c.samples.last().unwrap().1;
        assert!((last - c.lambda_inf).abs() <= 0.5 * (mid - c.lambda_inf).abs() + 1e-12, "{c:?}");
    }
}

/// `int |f'|^2 + (g - 1)(1 - u_j^2) f_j^2` by explicit cell sums.
fn h_norm_sq(f: &RealPair, p: &WallProfile) -> f64 {
    let (g, h) = (p.grid, p.grid.h());
    let n = g.len();
    let mut s = 0.0;
    for (fj, uj) in [(&f.f1, &p.u1), (&f.f2, &p.u2)] {
        for i in 0..n - 1 {
            s += (fj[i + 1] - fj[i]).powi(2) / h;
        }
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
            s += w * (p.gamma - 1.0) * (1.0 - uj[i] * uj[i]) * fj[i] * fj[i];
        }
    }
    s
}

#[test]
fn b_leading_part_matches_direct_norms() {
    let p = wall(1501);
    let m = assemble_b(&ModulationState::zero(p.grid), &p).unwrap();
    let want = [-h_norm_sq(&p.derivative(), &p), h_norm_sq(&p.gauge_mode(0), &p), h_norm_sq(&p.gauge_mode(1), &p)];
    for j in 0..3 {
        assert!(((m.leading[j][j] - want[j]) / want[j]).abs() < 1e-10);
    }
    assert!(m.condition().is_finite());
}

#[test]
fn stacked_layout_matches_weighted_inner() {
    let p = wall(401);
    let k = assemble(OperatorKind::K, &p).unwrap();
    let du = p.derivative();
    let direct = h_norm_sq(&du, &p);
    assert!((k.form_stacked(&stack(&du), &stack(&du)) - direct).abs() < 1e-12 * direct);
}

#[test]
fn stability_sweep_invariants() {
    let configs: Vec<ExperimentConfig> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&d| {
            ExperimentConfig::parse(&format!(
                "gamma = 2\nL = 30\nn = 601\ndt = 0.05\nT = 4\nstride = 4\nR = 6\ndelta = {d}\nperturbation = RandomSmooth(3)\nnu = 1e9\n"
            ))
            .unwrap()
        })
        .collect();
    let reports = run_sweep(&configs).unwrap();
    for (r, c) in reports.iter().zip(&configs) {
        assert_eq!(r.config, *c);
        assert!((r.delta_measured - c.delta).abs() <= 1e-12 * c.delta);
        assert!(r.energy_gap >= 0.0 && r.energy_gap_drift <= 1e-6);
        assert!(r.max_orthogonality_residual <= TOL_MOD);
        if r.ball_initial {
            assert!(r.ball_all);
        }
        for s in &r.series {
            assert!(s.ratio <= r.c_growth * c.delta * (1.0 + 1e-12));
        }
        // Consecutive snapshots move by at most the largest rate times the gap.
        for w in r.series.windows(2) {
            let dt = w[1].t - w[0].t;
            let d = (w[1].alpha - w[0].alpha).abs().max((w[1].theta1 - w[0].theta1).abs()).max((w[1].theta2 - w[0].theta2).abs());
            assert!(d <= 2.0 * r.max_rate * dt + 1e-12);
        }
    }
    // Larger delta, larger epsilon.
    assert!(reports.windows(2).all(|w| w[0].epsilon_measured >= w[1].epsilon_measured));
}

#[test]
fn rate_forcing_vanishes_on_the_wall() {
    let p = wall(801);
    let f = rate_forcing(&ModulationState::zero(p.grid), &p).unwrap();
    assert!(f.iter().all(|v| v.abs() < 1e-9), "{f:?}");
}
