mod common;

use common::*;
use proptest::prelude::*;
use uhf_core::dense::{SiteWindow, StateSpec};
use uhf_core::lindblad::{
    evolve, partial_semigroup_exact, perturbed_ergodic_state, EvolveMethod, EvolveOptions, KrausFamily, Lindbladian,
    QuadSpec, Truncation,
};
use uhf_core::weyl::{AlgebraParams, LocalOperator, Site};
use uhf_core::C64;

fn random_generator(seed: u64, params: AlgebraParams) -> Lindbladian {
    let mut g = rng(seed);
    let sites = line(params.d(), 2);
    let members = 1 + (seed % 2) as usize;
    let ops = (0..members).map(|_| operator(&mut g, params, &sites, 2)).collect();
    Lindbladian::translation_covariant(KrausFamily::new(ops).unwrap())
}

fn random_state(seed: u64) -> StateSpec {
    let mut g = rng(seed ^ 0x5eed);
    let p: f64 = rand::Rng::random_range(&mut g, 0.05..0.95);
    let bound = 0.6 * (p * (1.0 - p)).sqrt();
    let a = C64::new(rand::Rng::random_range(&mut g, -bound..bound), rand::Rng::random_range(&mut g, -bound..bound));
    let m = nalgebra::DMatrix::from_row_slice(2, 2, &[C64::new(p, 0.0), a, a.conj(), C64::new(1.0 - p, 0.0)]);
    StateSpec::new(m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservative(seed in any::<u64>(), d in 1usize..=2) {
        let l = random_generator(seed, p2(d));
        prop_assert!(l.lind_total(&LocalOperator::identity(p2(d))).is_zero());
    }

    #[test]
    fn star_real(seed in any::<u64>(), d in 1usize..=2) {
        let params = p2(d);
        let l = random_generator(seed, params);
        let x = operator(&mut rng(seed.wrapping_add(1)), params, &line(d, 3), 3);
        let lhs = l.lind_total(&x.adjoint());
        prop_assert!(lhs.approx_eq(&l.lind_total(&x).adjoint(), 1e-12));
    }

    #[test]
    fn cocycle(seed in any::<u64>(), d in 1usize..=2) {
        let params = p2(d);
        let l = random_generator(seed, params);
        let mut g = rng(seed.wrapping_add(2));
        let sites = line(d, 3);
        let x = operator(&mut g, params, &sites, 3);
        let y = operator(&mut g, params, &sites, 3);
        let lhs = l.lind_total(&(&x * &y));
        let mut rhs = &(&x * &l.lind_total(&y)) + &(&l.lind_total(&x) * &y);
        let base = l.base_support();
        for ch in l.channels() {
            for k in Lindbladian::contributing_shifts(&base, &x.support()) {
                rhs = &rhs + &(&l.delta_dag(ch, &k, &x) * &l.delta(ch, &k, &y));
            }
        }
        prop_assert!(lhs.approx_eq(&rhs, 1e-12), "defect {}", lhs.max_coeff_diff(&rhs));
    }

    #[test]
    fn covariant(seed in any::<u64>(), d in 1usize..=2, j0 in -3i64..=3, j1 in -3i64..=3) {
        let params = p2(d);
        let l = random_generator(seed, params);
        let x = operator(&mut rng(seed.wrapping_add(3)), params, &line(d, 3), 3);
        let j = Site::new(&[j0, j1][..d]);
        let lhs = l.lind_total(&x.translate(&j));
        prop_assert!(lhs.approx_eq(&l.lind_total(&x).translate(&j), 1e-12));
    }

    #[test]
    fn partial_state_identities(seed in any::<u64>()) {
        let params = p2(1);
        let l = Lindbladian::partial_state(params, random_state(seed)).unwrap();
        let mut g = rng(seed);
        let sites = line(1, 3);
        let x = operator(&mut g, params, &sites, 3);
        let y = operator(&mut g, params, &sites, 3);
        prop_assert!(l.lind_total(&LocalOperator::identity(params)).is_zero());
        prop_assert!(l.lind_total(&x.adjoint()).approx_eq(&l.lind_total(&x).adjoint(), 1e-12));
        let lhs = l.lind_total(&(&x * &y));
        let mut rhs = &(&x * &l.lind_total(&y)) + &(&l.lind_total(&x) * &y);
        for ch in l.channels() {
            for k in Lindbladian::contributing_shifts(&l.base_support(), &x.support()) {
                rhs = &rhs + &(&l.delta_dag(ch, &k, &x) * &l.delta(ch, &k, &y));
            }
        }
        prop_assert!(lhs.approx_eq(&rhs, 1e-12));
    }
}

fn interior(method: EvolveMethod, window: &SiteWindow) -> EvolveOptions {
    EvolveOptions {
        window: Some(window.clone()),
        truncation: Truncation::Interior,
        ..EvolveOptions::with_method(method)
    }
}

#[test]
fn time_zero_is_identity_map() {
    let params = p2(1);
    let l = random_generator(7, params);
    let x = operator(&mut rng(8), params, &line(1, 2), 3);
    let w = SiteWindow::from_sites(line(1, 3).iter());
    for m in [EvolveMethod::Series, EvolveMethod::Ode, EvolveMethod::Oracle] {
        let r = evolve(&l, &x, &[0.0], &interior(m, &w)).unwrap();
        assert!(r.values[0].approx_eq(&x, 1e-12), "{m:?}");
    }
    assert!(evolve(&l, &x, &[-0.1], &interior(EvolveMethod::Ode, &w)).is_err());
}

#[test]
fn partial_state_two_site_example() {
    let params = p2(1);
    let l = Lindbladian::partial_state(params, StateSpec::maximally_mixed(2)).unwrap();
    let x = &op(params, &[0], 1, 0) * &op(params, &[1], 1, 0);
    let grid = [0.0, 0.5, 1.0, 2.0];
    for m in [EvolveMethod::Series, EvolveMethod::Ode, EvolveMethod::ExactClosedForm] {
        let r = evolve(&l, &x, &grid, &EvolveOptions::with_method(m)).unwrap();
        for (t, v) in grid.iter().zip(&r.values) {
            assert!(v.approx_eq(&x.scale_re((-2.0 * t).exp()), 1e-10), "{m:?} t={t}");
        }
    }
}

#[test]
fn methods_match_dense_oracle() {
    let grid = [0.25, 0.5, 1.0];
    for seed in 0..12u64 {
        let params = p2(1);
        let l = random_generator(seed, params);
        let w = SiteWindow::from_sites(line(1, 3).iter());
        let x = operator(&mut rng(seed + 100), params, &line(1, 3), 4);
        let oracle = evolve(&l, &x, &grid, &interior(EvolveMethod::Oracle, &w)).unwrap();
        for m in [EvolveMethod::Series, EvolveMethod::Ode] {
            let r = evolve(&l, &x, &grid, &interior(m, &w)).unwrap();
            for (a, b) in r.values.iter().zip(&oracle.values) {
                let diff = a.max_coeff_diff(b);
                assert!(diff <= 1e-9, "seed {seed} {m:?}: {diff}");
            }
        }
    }
}

#[test]
fn closed_form_matches_generic_evolution() {
    let params = p2(1);
    for seed in 0..8u64 {
        let st = random_state(seed);
        let l = Lindbladian::partial_state(params, st.clone()).unwrap();
        let x = operator(&mut rng(seed), params, &line(1, 2), 4);
        let grid = [0.3, 1.0, 2.5];
        let r = evolve(&l, &x, &grid, &EvolveOptions::with_method(EvolveMethod::Ode)).unwrap();
        for (t, v) in grid.iter().zip(&r.values) {
            let exact = partial_semigroup_exact(&st, &x, *t).unwrap();
            assert!(v.approx_eq(&exact, 1e-10), "seed {seed} t={t}: {}", v.max_coeff_diff(&exact));
        }
    }
}

#[test]
fn semigroup_law_and_unitality() {
    let params = p2(1);
    let l = random_generator(3, params);
    let w = SiteWindow::from_sites(line(1, 3).iter());
    let x = operator(&mut rng(4), params, &line(1, 3), 3);
    let opts = interior(EvolveMethod::Ode, &w);
    let direct = evolve(&l, &x, &[0.7], &opts).unwrap().values.remove(0);
    let half = evolve(&l, &x, &[0.3], &opts).unwrap().values.remove(0);
    let composed = evolve(&l, &half, &[0.4], &opts).unwrap().values.remove(0);
    assert!(direct.approx_eq(&composed, 1e-10));
    let one = LocalOperator::identity(params);
    let r = evolve(&l, &one, &[0.5, 1.5, 3.0], &opts).unwrap();
    assert!(r.values.iter().all(|v| v.approx_eq(&one, 1e-10)));
}

#[test]
fn choi_matrix_positive() {
    let params = p2(1);
    for seed in 0..4u64 {
        let l = random_generator(seed, params);
        let w = SiteWindow::from_sites(line(1, 2).iter());
        let s = l.superoperator(&w, Truncation::Interior.closure_mode()).unwrap();
        for t in [0.1, 0.5, 1.0] {
            assert!(s.choi_min_eigenvalue(t).unwrap() >= -1e-9);
        }
    }
}

#[test]
fn open_truncation_books_leakage() {
    let params = p2(1);
    let r = &op(params, &[0], 1, 0) * &op(params, &[1], 1, 0);
    let l = Lindbladian::translation_covariant(KrausFamily::single(&r + &op(params, &[0], 0, 1)));
    let x = op(params, &[0], 0, 1);
    let small = SiteWindow::from_sites([Site::new(&[0])].iter());
    let opts = EvolveOptions { window: Some(small), ..EvolveOptions::with_method(EvolveMethod::Series) };
    let res = evolve(&l, &x, &[0.02], &opts).unwrap();
    assert!(res.error_budget[0] > 1e-6);
    let exact = evolve(&l, &x, &[0.02], &EvolveOptions::with_method(EvolveMethod::Ode)).unwrap();
    assert!(res.values[0].max_coeff_diff(&exact.values[0]) <= res.error_budget[0] + exact.error_budget[0]);
}

#[test]
fn error_budget_nondecreasing() {
    let params = p2(1);
    let l = random_generator(11, params);
    let x = operator(&mut rng(12), params, &line(1, 2), 3);
    let r = evolve(&l, &x, &[0.0, 0.5, 1.0, 1.5], &EvolveOptions::with_method(EvolveMethod::Ode)).unwrap();
    assert!(r.error_budget.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn perturbed_state_is_stationary() {
    let params = p2(1);
    let st = StateSpec::diagonal(&[0.7, 0.3]).unwrap();
    let r = &op(params, &[0], 1, 0) + &op(params, &[1], 0, 1).scale_re(0.5);
    let l = Lindbladian::perturbed(params, st, KrausFamily::single(r), 0.1).unwrap();
    let x = &op(params, &[0], 0, 1) * &op(params, &[1], 0, 1);
    let quad = QuadSpec::default();
    let phi = perturbed_ergodic_state(&l, &x, &quad).unwrap();
    let w = quad_window(&l, &x);
    let opts = EvolveOptions { window: Some(w.clone()), truncation: Truncation::Interior, ..Default::default() };
    let moved = evolve(&l, &x, &[0.5], &opts).unwrap().values.remove(0);
    let quad_w = QuadSpec { window: Some(w), ..QuadSpec::default() };
    let phi_moved = perturbed_ergodic_state(&l, &moved, &quad_w).unwrap();
    let phi_w = perturbed_ergodic_state(&l, &x, &quad_w).unwrap();
    assert!((phi_moved.value - phi_w.value).norm() <= 1e-6, "{phi_moved:?} {phi_w:?}");
    assert!((phi.value - phi_w.value).norm() <= 1e-6);
    let one = LocalOperator::identity(params);
    assert!((perturbed_ergodic_state(&l, &one, &quad).unwrap().value - C64::new(1.0, 0.0)).norm() < 1e-12);
}

fn quad_window(l: &Lindbladian, x: &LocalOperator) -> SiteWindow {
    let pad = (2 * l.kraus_radius()).max(1) * 2;
    SiteWindow::padded_box(&x.support(), 1, pad)
}
