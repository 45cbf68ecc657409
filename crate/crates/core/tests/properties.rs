use std::sync::OnceLock;

use dwlab_core::evolution::Stepper;
use dwlab_core::functionals::{delta_e, delta_e_split, energy_decomposition_sides};
use dwlab_core::modulation::{translate_gauge_state, ModulationState, TOL_MOD};
use dwlab_core::spectral::random_smooth_pair;
use dwlab_core::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid() -> Grid {
    Grid::new(30.0, 601).unwrap()
}

fn wall2() -> &'static WallProfile {
    static P: OnceLock<WallProfile> = OnceLock::new();
    P.get_or_init(|| solve_profile(2.0, &grid(), 1e-10).unwrap())
}

fn wall_fine() -> &'static WallProfile {
    static P: OnceLock<WallProfile> = OnceLock::new();
    P.get_or_init(|| solve_profile(2.0, &Grid::new(30.0, 1501).unwrap(), 1e-10).unwrap())
}

fn field(g: Grid, seed: u64) -> RealPair {
    random_smooth_pair(g, &mut ChaCha8Rng::seed_from_u64(seed), 3)
}

fn complex_field(g: Grid, seed: u64) -> ComplexPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let re = random_smooth_pair(g, &mut rng, 3);
    let im = random_smooth_pair(g, &mut rng, 3);
    ComplexPair::from_parts(&re, &im).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn diff1_of_constant_vanishes(c in -5.0f64..5.0, n in 5usize..200) {
        let g = Grid::new(7.0, 2 * n + 1).unwrap();
        let d = diff1(&vec![c; g.len()], &g).unwrap();
        prop_assert!(d.iter().all(|v| v.abs() <= 1e-13));
    }

    #[test]
    fn quad_of_odd_function_vanishes(a in 0.1f64..3.0, b in -2.0f64..2.0, n in 5usize..400) {
        let g = Grid::new(10.0, 2 * n + 1).unwrap();
        let f = g.sample(|x| b * x * (-a * x * x).exp() + x.powi(3) / 100.0);
        prop_assert!(quad(&f, &g).unwrap().abs() <= 1e-13);
    }

    #[test]
    fn profile_invariants(gamma in 1.3f64..5.0) {
        let p = solve_profile(gamma, &grid(), 1e-10).unwrap();
        let g = p.grid;
        for i in 0..g.len() {
            prop_assert!(p.u1[i] >= 0.0 && p.u2[i] >= 0.0);
            prop_assert!(p.u1[i] * p.u1[i] + p.u2[i] * p.u2[i] <= 1.0 + 1e-10);
            prop_assert!((p.u1[i] - p.u2[g.mirror(i)]).abs() <= 1e-8);
        }
        for w in p.u1.windows(2) {
            prop_assert!(w[1] - w[0] >= -1e-10);
        }
        for w in p.u2.windows(2) {
            prop_assert!(w[1] - w[0] <= 1e-10);
        }
        // Sandwich over the fitted constants.
        let fit = fit_decay(&p).unwrap();
        let k = p.coupling().left_rate();
        for i in 0..g.len() {
            let x = g.x(i);
            if x <= 0.0 && p.u1[i] >= 1e-14 {
                let s = p.u1[i] * (-k * x).exp();
                prop_assert!(s >= fit.c_minus * (1.0 - 1e-12) && s <= fit.c_plus * (1.0 + 1e-12));
            }
        }
        prop_assert!(fit.c_minus > 0.0);
    }

    #[test]
    fn energy_nonnegative_on_bounded_fields(seed: u64, scale in 0.0f64..0.4) {
        let g = grid();
        let f = complex_field(g, seed);
        let m = f.psi1.iter().chain(&f.psi2).map(|z| z.norm()).fold(0.0, f64::max).max(1e-12);
        let psi = ComplexPair::zeros(g).add_scaled(1.2 * scale.max(1e-3) / m * 2.5, &f).unwrap();
        prop_assert!(psi.psi1.iter().chain(&psi.psi2).all(|z| z.norm() <= 1.2 + 1e-12));
        prop_assert!(energy(&psi, 2.0).unwrap() >= 0.0);
    }

    #[test]
    fn weighted_inner_hermitian_and_positive(a: u64, b: u64) {
        let p = wall2();
        let (f, h) = (complex_field(p.grid, a), complex_field(p.grid, b));
        let fh = weighted_inner(&f, &h, p).unwrap();
        let hf = weighted_inner(&h, &f, p).unwrap();
        prop_assert!((fh - hf.conj()).norm() <= 1e-12 * (1.0 + fh.norm()));
        let ff = weighted_inner(&f, &f, p).unwrap();
        prop_assert!(ff.re > 0.0 && ff.im.abs() <= 1e-12 * ff.re);
    }

    #[test]
    fn energy_decomposition_is_exact(seed: u64, scale in 1e-4f64..0.1) {
        let p = wall2();
        let v = field(p.grid, seed).scaled(scale);
        let w = field(p.grid, seed ^ 0x9e37).scaled(scale);
        let s = energy_decomposition_sides(&Perturbation::new(p, v, w).unwrap()).unwrap();
        prop_assert!(rel(s.lhs, s.rhs) <= 1e-9, "{:?}", s);
    }

    #[test]
    fn delta_e_split_sums_to_delta_e(seed: u64, scale in 1e-3f64..0.2, r in 1.0f64..20.0) {
        let p = wall2();
        let v = field(p.grid, seed).scaled(scale);
        let w = field(p.grid, seed.wrapping_add(1)).scaled(scale);
        let pert = Perturbation::new(p, v, w).unwrap();
        let total = delta_e(&pert).unwrap();
        let split = delta_e_split(&pert, r).unwrap().total();
        prop_assert!(rel(total, split) <= 1e-9, "{total} {split}");
    }

    #[test]
    fn rho_r_symmetric_and_triangle(a: u64, b: u64, c: u64, r in 1.0f64..20.0) {
        let p = wall2();
        let u = p.as_state();
        let states: Vec<ComplexPair> = [a, b, c].iter().map(|&s| u.add_scaled(0.05, &complex_field(p.grid, s)).unwrap()).collect();
        let d = |i: usize, j: usize| rho_r(&states[i], &states[j], r, p).unwrap();
        prop_assert!((d(0, 1) - d(1, 0)).abs() <= 1e-12 * d(0, 1).max(1.0));
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
    }

    #[test]
    fn operators_symmetric(gamma in 1.3f64..5.0, r in 0.5f64..25.0) {
        let p = solve_profile(gamma, &grid(), 1e-10).unwrap();
        for kind in [OperatorKind::K, OperatorKind::Lminus, OperatorKind::Lplus, OperatorKind::LR(r)] {
            prop_assert!(assemble(kind, &p).unwrap().symmetry_defect() <= 1e-13);
        }
    }

    #[test]
    fn perturbation_kind_names_round_trip(seed: u64, pick in 0usize..4) {
        let kinds = [
            PerturbationKind::RandomSmooth(seed),
            PerturbationKind::BumpReal,
            PerturbationKind::BumpImag,
            PerturbationKind::KickPhase,
        ];
        let k = kinds[pick];
        prop_assert_eq!(k.to_string().parse::<PerturbationKind>().unwrap(), k);
    }

    #[test]
    fn experiment_config_round_trip(gamma in 1.1f64..8.0, n in 50usize..4000, delta in 0.0f64..0.1, r in 0.5f64..29.0, seed: u64) {
        let text = format!(
            "gamma = {gamma}\nL = 30\nn = {}\ndt = 0.001\nT = 2\nstride = 5\nR = {r}\ndelta = {delta}\nperturbation = RandomSmooth({seed})\n",
            2 * n + 1
        );
        let c = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn time_reversal(seed: u64, amp in 0.0f64..0.05) {
        let p = wall2();
        let psi0 = p.as_state().add_scaled(amp, &complex_field(p.grid, seed)).unwrap();
        let cfg = EvolveConfig::new(0.02, 1.0);
        let mut st = Stepper::new(p.grid, 2.0, &cfg).unwrap();
        let mut psi = psi0.clone();
        for _ in 0..10 {
            st.step(&mut psi, 0.02).unwrap();
        }
        for _ in 0..10 {
            st.step(&mut psi, -0.02).unwrap();
        }
        prop_assert!(psi.max_abs_diff(&psi0) <= 10.0 * 10.0 * cfg.nl_tol, "{}", psi.max_abs_diff(&psi0));
    }

    #[test]
    fn gauge_equivariant_flow(seed: u64, theta in -3.0f64..3.0) {
        let p = wall2();
        let psi0 = p.as_state().add_scaled(0.03, &complex_field(p.grid, seed)).unwrap();
        let rot = Complex64::from_polar(1.0, theta);
        let cfg = EvolveConfig::new(0.02, 0.2);
        let a = evolve(&psi0, 2.0, &cfg, 100).unwrap();
        let b = evolve(&psi0.rotated(rot, rot), 2.0, &cfg, 100).unwrap();
        let (fa, fb) = (a.snapshots.last().unwrap(), b.snapshots.last().unwrap());
        prop_assert!(fa.rotated(rot, rot).max_abs_diff(fb) <= 1e-10);
    }

    #[test]
    fn modulation_equivariance(seed: u64, a in -0.2f64..0.2, t1 in -0.3f64..0.3, t2 in -0.3f64..0.3) {
        let p = wall_fine();
        let zero = ModulationState::zero(p.grid);
        let base = p.as_state().add_scaled(5e-3, &complex_field(p.grid, seed)).unwrap();
        let s0 = fit_modulation(&base, p, &zero).unwrap();
        let moved = translate_gauge_state(&base, a, t1, t2).unwrap();
        let guess = ModulationState { alpha: s0.alpha + a, theta1: s0.theta1 + t1, theta2: s0.theta2 + t2, ..zero.clone() };
        let s1 = fit_modulation(&moved, p, &guess).unwrap();
        prop_assert!(s0.max_residual() <= TOL_MOD && s1.max_residual() <= TOL_MOD);
        let e = [s1.alpha - s0.alpha - a, s1.theta1 - s0.theta1 - t1, s1.theta2 - s0.theta2 - t2];
        prop_assert!(e.iter().all(|x| x.abs() <= 1e-8), "{:?}", e);
    }
}
