//! Refinement studies: every discretized quantity should converge at second
//! order in `h` (and `dt`).

use std::f64::consts::PI;

use dwlab_core::evolution::Stepper;
use dwlab_core::spectral::random_smooth_pair;
use dwlab_core::*;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ratio_ok(r: f64) -> bool {
    (3.5..=4.5).contains(&r)
}

#[test]
fn quadrature_of_gaussian() {
    let g = Grid::new(10.0, 4001).unwrap();
    let v = quad(&g.sample(|x| (-x * x).exp()), &g).unwrap();
    assert!((v - PI.sqrt()).abs() < 1e-8);
}

#[test]
fn diff1_and_quad_are_second_order() {
    let f = |x: f64| (-x * x / 4.0).exp() * (2.0 * x).sin() + 0.3 * x.cos();
    let df = |x: f64| (-x * x / 4.0).exp() * (2.0 * (2.0 * x).cos() - 0.5 * x * (2.0 * x).sin()) - 0.3 * x.sin();
    let exact_int = 0.6 * 8f64.sin();
    let errs: Vec<(f64, f64)> = [201, 401, 801]
        .iter()
        .map(|&n| {
            let g = Grid::new(8.0, n).unwrap();
            let d = diff1(&g.sample(f), &g).unwrap();
            // Interior only; the one-sided end stencils are first order.
            let de = (1..n - 1).map(|i| (d[i] - df(g.x(i))).abs()).fold(0.0, f64::max);
            let qe = (quad(&g.sample(f), &g).unwrap() - exact_int).abs();
            (de, qe)
        })
        .collect();
    for w in errs.windows(2) {
        assert!(ratio_ok(w[0].0 / w[1].0), "diff1 {errs:?}");
        assert!(ratio_ok(w[0].1 / w[1].1), "quad {errs:?}");
    }
}

#[test]
fn profile_converges_at_second_order() {
    let oracle = solve_profile(2.0, &Grid::new(30.0, 12001).unwrap(), 1e-10).unwrap();
    let errs: Vec<f64> = [751, 1501, 3001]
        .iter()
        .map(|&n| {
            let p = solve_profile(2.0, &Grid::new(30.0, n).unwrap(), 1e-10).unwrap();
            let stride = 12000 / (n - 1);
            (0..n).map(|i| (p.u1[i] - oracle.u1[i * stride]).abs()).fold(0.0, f64::max)
        })
        .collect();
    // The oracle's own error inflates the last ratio by at most 16/15.
    assert!(ratio_ok(errs[0] / errs[1]) && ratio_ok(errs[1] / errs[2]), "{errs:?}");
}

#[test]
fn lminus_gap_converges_at_second_order() {
    let gap = |n: usize| {
        let p = solve_profile(2.0, &Grid::new(30.0, n).unwrap(), 1e-10).unwrap();
        let k = assemble(OperatorKind::K, &p).unwrap();
        lowest_eigs(&assemble(OperatorKind::Lminus, &p).unwrap(), &k, 3).unwrap().eigenvalues[2]
    };
    let v: Vec<f64> = [751, 1501, 3001].iter().map(|&n| gap(n)).collect();
    assert!(ratio_ok((v[1] - v[0]) / (v[2] - v[1])), "{v:?}");
}

#[test]
fn energy_is_stationary_at_the_wall() {
    let p = solve_profile(2.0, &Grid::new(30.0, 1501).unwrap(), 1e-10).unwrap();
    let u = p.as_state();
    let e0 = energy(&u, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let d = ComplexPair::from_parts(&random_smooth_pair(p.grid, &mut rng, 3), &random_smooth_pair(p.grid, &mut rng, 3)).unwrap();
        let slope = |eps: f64| (energy(&u.add_scaled(eps, &d).unwrap(), 2.0).unwrap() - e0).abs() / eps;
        let (s1, s2) = (slope(1e-3), slope(5e-4));
        // Slope shrinks linearly in eps: no first-order term.
        assert!(s1 < 1e-1 && (s1 / s2 - 2.0).abs() < 0.05, "{s1} {s2}");
    }
}

fn tanh_state(g: Grid, t: f64) -> ComplexPair {
    let rot = Complex64::from_polar(1.0, -t);
    let f = |x: f64| 0.5 * (1.0 + (x / std::f64::consts::SQRT_2).tanh());
    ComplexPair::new(g, g.nodes().iter().map(|&x| rot * f(x)).collect(), g.nodes().iter().map(|&x| rot * f(-x)).collect()).unwrap()
}

fn run(psi0: &ComplexPair, dt: f64, t: f64) -> ComplexPair {
    let cfg = EvolveConfig::new(dt, t);
    let mut st = Stepper::new(psi0.grid, 3.0, &cfg).unwrap();
    let mut psi = psi0.clone();
    for _ in 0..cfg.steps() {
        st.step(&mut psi, dt).unwrap();
    }
    psi
}

#[test]
fn evolution_second_order_in_h() {
    let errs: Vec<f64> = [501, 1001, 2001]
        .iter()
        .map(|&n| {
            let g = Grid::new(30.0, n).unwrap();
            run(&tanh_state(g, 0.0), 0.5 * g.h(), 0.48).max_abs_diff(&tanh_state(g, 0.48))
        })
        .collect();
    let order = (errs[1] / errs[2]).log2();
    assert!((order - 2.0).abs() <= 0.3, "{errs:?}");
}

#[test]
fn evolution_second_order_in_dt() {
    let g = Grid::new(30.0, 1001).unwrap();
    let u = tanh_state(g, 0.0);
    let r: Vec<ComplexPair> = [0.03, 0.015, 0.0075].iter().map(|&dt| run(&u, dt, 0.6)).collect();
    let order = (r[0].max_abs_diff(&r[1]) / r[1].max_abs_diff(&r[2])).log2();
    assert!((order - 2.0).abs() <= 0.3, "{order}");
}
