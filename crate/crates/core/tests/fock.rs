mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use uhf_core::dense::{operator_norm, SiteWindow, StateSpec};
use uhf_core::fock::*;
use uhf_core::lindblad::{
    evolve, partial_semigroup_exact, EvolveMethod, EvolveOptions, KrausFamily, Lindbladian, Truncation,
};
use uhf_core::ode::{LinearOperator, OdeMethod};
use uhf_core::weyl::{theta, AlgebraParams, GnsVector, LocalOperator, Site, WeylLabel};
use uhf_core::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn one(params: AlgebraParams) -> LocalOperator {
    LocalOperator::identity(params)
}

fn sx(params: AlgebraParams, s: i64) -> LocalOperator {
    op(params, &[s], 1, 0)
}

fn sz(params: AlgebraParams, s: i64) -> LocalOperator {
    op(params, &[s], 0, 1)
}

fn step(rng: &mut impl Rng, t_max: f64, cells: usize, scale: f64) -> StepFunction {
    StepFunction::new(t_max, (0..cells).map(|_| coeff(rng) * scale).collect()).unwrap()
}

/// Random test function on the given modes.
fn test_function(rng: &mut impl Rng, t_max: f64, cells: usize, modes: &[Mode], scale: f64) -> TestFunction {
    let mut f = TestFunction::zero(t_max, cells).unwrap();
    for m in modes {
        f = f.with_mode(m.clone(), step(rng, t_max, cells, scale)).unwrap();
    }
    f
}

fn modes_1d(sites: std::ops::RangeInclusive<i64>, channels: usize) -> Vec<Mode> {
    sites.flat_map(|k| (0..channels).map(move |ch| Mode::new(Site::new(&[k]), ch))).collect()
}

fn xz_generator(params: AlgebraParams) -> Lindbladian {
    Lindbladian::translation_covariant(KrausFamily::single(&sx(params, 0) * &sz(params, 1)))
}

fn grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
}

#[test]
fn partial_state_system_closes_on_site_basis() {
    let params = p2(1);
    let l = Lindbladian::partial_state(params, StateSpec::maximally_mixed(2)).unwrap();
    let w = SiteWindow::from_sites([&site(&[0])]);
    let sys = FlowGeneratorSystem::build(&l, &w, &[sx(params, 0)]).unwrap();
    assert_eq!(sys.dim(), 4);
    assert!(sys.is_leak_free());
    assert!(sys.lhat_matrix().column(0).is_empty());
}

#[test]
fn noise_modes_of_single_site_r() {
    let params = p2(1);
    let l = Lindbladian::translation_covariant(KrausFamily::single(op(params, &[0], 1, 0)));
    let w = SiteWindow::cube(&site(&[0]), 1);
    let sys = FlowGeneratorSystem::build(&l, &w, &[sz(params, 0)]).unwrap();
    for m in sys.noise_modes() {
        assert!(m.site.coords()[0].abs() <= 2);
    }
    assert!(!sys.noise_modes().is_empty());
    assert!(sys.lhat_matrix().column(0).is_empty());
}

#[test]
fn initial_condition_and_unitality() {
    let params = p2(1);
    let l = xz_generator(params);
    let mut r = rng(7);
    let sites = line(1, 3);
    let w = SiteWindow::cube(&site(&[1]), 2);
    let u = operator(&mut r, params, &sites, 3);
    let v = operator(&mut r, params, &sites, 3);
    let modes = modes_1d(-1..=3, 1);
    let f = test_function(&mut r, 1.0, 4, &modes, 0.5);
    let g = test_function(&mut r, 1.0, 4, &modes, 0.5);
    let spec = ElementSpec::new(u.clone(), f.clone(), v.clone(), g.clone()).unwrap();
    let x = operator(&mut r, params, &sites, 3);
    let sys = FlowGeneratorSystem::build(&l, &w, std::slice::from_ref(&x)).unwrap();
    let ts = grid(1.0, 8);
    let tr = flow_element(&sys, &x, &spec, &ts, FlowMethod::default()).unwrap();
    let expect = GnsVector(u.clone()).inner(&GnsVector(&x * &v)) * exp_inner(&f, &g).unwrap();
    assert!((tr.values[0] - expect).norm() < 1e-12);
    assert!(tr.error_estimate.windows(2).all(|p| p[1] >= p[0]));

    let id = one(params);
    let tr1 = flow_element(&sys, &id, &spec, &ts, FlowMethod::default()).unwrap();
    let expect1 = GnsVector(u).inner(&GnsVector(v)) * exp_inner(&f, &g).unwrap();
    for v in &tr1.values {
        assert!((v - expect1).norm() < 1e-9 * expect1.norm().max(1.0));
    }
}

#[test]
fn partial_state_vacuum_example() {
    let params = p2(1);
    let l = Lindbladian::partial_state(params, StateSpec::maximally_mixed(2)).unwrap();
    let w = SiteWindow::from_sites([&site(&[0])]);
    let sys = FlowGeneratorSystem::build(&l, &w, &[sx(params, 0)]).unwrap();
    let spec = ElementSpec::vacuum(sx(params, 0), one(params), 2.0).unwrap();
    let ts = grid(2.0, 8);
    let tr = flow_element(&sys, &sx(params, 0), &spec, &ts, FlowMethod::default()).unwrap();
    for (t, v) in ts.iter().zip(&tr.values) {
        assert!((v - c((-t).exp(), 0.0)).norm() < 1e-10, "t={t}");
    }
}

#[test]
fn vacuum_reduction_matches_semigroup() {
    let params = p2(1);
    let ts = grid(2.0, 8);
    for seed in 0..6u64 {
        let mut r = rng(seed);
        let rop = operator(&mut r, params, &line(1, 2), 2);
        let l = Lindbladian::translation_covariant(KrausFamily::single(rop));
        let w = SiteWindow::cube(&site(&[0]), 1);
        let x = operator(&mut r, params, &[site(&[0])], 3);
        let u = operator(&mut r, params, w.sites(), 3);
        let v = operator(&mut r, params, w.sites(), 3);
        let sys = FlowGeneratorSystem::build(&l, &w, std::slice::from_ref(&x)).unwrap();
        let spec = ElementSpec::vacuum(u.clone(), v.clone(), 2.0).unwrap();
        let tr = flow_element(&sys, &x, &spec, &ts, FlowMethod::default()).unwrap();
        let opts = EvolveOptions {
            window: Some(w.clone()),
            truncation: Truncation::Open,
            ..EvolveOptions::with_method(EvolveMethod::Ode)
        };
        let ev = evolve(&l, &x, &ts, &opts).unwrap();
        for ((t, a), p) in ts.iter().zip(&tr.values).zip(&ev.values) {
            let b = vacuum_inner(&u, p, &v);
            assert!((a - b).norm() <= 1e-8, "seed {seed} t={t}: {a} vs {b}");
        }
    }
}

#[test]
fn adjoint_symmetry() {
    let params = p2(1);
    let l = xz_generator(params);
    let mut r = rng(11);
    let w = SiteWindow::cube(&site(&[0]), 1);
    let sites = w.sites().to_vec();
    let modes = modes_1d(-2..=2, 1);
    let ts = grid(1.0, 4);
    for _ in 0..4 {
        let x = operator(&mut r, params, &sites, 3);
        let u = operator(&mut r, params, &sites, 2);
        let v = operator(&mut r, params, &sites, 2);
        let f = test_function(&mut r, 1.0, 2, &modes, 0.4);
        let g = test_function(&mut r, 1.0, 2, &modes, 0.4);
        let sys = FlowGeneratorSystem::build(&l, &w, &[x.clone(), x.adjoint()]).unwrap();
        let a = flow_element(
            &sys,
            &x.adjoint(),
            &ElementSpec::new(u.clone(), f.clone(), v.clone(), g.clone()).unwrap(),
            &ts,
            FlowMethod::default(),
        )
        .unwrap();
        let b = flow_element(&sys, &x, &ElementSpec::new(v, g, u, f).unwrap(), &ts, FlowMethod::default()).unwrap();
        for (p, q) in a.values.iter().zip(&b.values) {
            assert!((p - q.conj()).norm() < 1e-9, "{p} vs {q}");
        }
    }
}

#[test]
fn pair_examples() {
    let params = p2(1);
    let l = Lindbladian::partial_state(params, StateSpec::maximally_mixed(2)).unwrap();
    let w = SiteWindow::from_sites([&site(&[0])]);
    let sys = FlowGeneratorSystem::build(&l, &w, &[sx(params, 0)]).unwrap();
    let spec = ElementSpec::vacuum(one(params), one(params), 2.0).unwrap();
    let ts = grid(2.0, 8);
    let pt = pair_element(&sys, &[(sx(params, 0), sx(params, 0))], &spec, &ts, None).unwrap();
    for v in &pt.values[0] {
        assert!((v - c(1.0, 0.0)).norm() < 1e-9);
    }
    assert!(pt.consistency < 1e-9);

    let mut r = rng(3);
    let u = operator(&mut r, params, &[site(&[0])], 3);
    let v = operator(&mut r, params, &[site(&[0])], 3);
    let spec = ElementSpec::vacuum(u.clone(), v.clone(), 2.0).unwrap();
    let x = operator(&mut r, params, &[site(&[0])], 2);
    let y = operator(&mut r, params, &[site(&[0])], 2);
    let pt = pair_element(&sys, &[(x.clone(), y.clone())], &spec, &[0.0], None).unwrap();
    let expect = GnsVector(u).inner(&GnsVector(&(&x * &y) * &v));
    assert!((pt.values[0][0] - expect).norm() < 1e-12);
}

#[test]
fn single_site_homomorphism_all_basis_pairs() {
    let params = p2(1);
    let state =
        StateSpec::new(nalgebra::DMatrix::from_row_slice(2, 2, &[c(0.7, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.3, 0.0)]))
            .unwrap();
    let l = Lindbladian::partial_state(params, state).unwrap();
    let k = site(&[0]);
    let w = SiteWindow::from_sites([&k]);
    let mut r = rng(5);
    let channels = l.channels().len();
    let modes = modes_1d(0..=0, channels);
    let f = test_function(&mut r, 2.0, 4, &modes, 0.5);
    let g = test_function(&mut r, 2.0, 4, &modes, 0.5);
    let u = operator(&mut r, params, std::slice::from_ref(&k), 3);
    let v = operator(&mut r, params, std::slice::from_ref(&k), 3);
    let spec = ElementSpec::new(u, f, v, g).unwrap();
    let labels: Vec<LocalOperator> =
        (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| op(params, &[0], a, b)).collect();
    let sys = FlowGeneratorSystem::build(&l, &w, &labels).unwrap();
    let ts = grid(2.0, 8);
    for x in &labels {
        for y in &labels {
            let h = homomorphism_defect(&sys, x, y, &spec, &ts).unwrap();
            assert!(h.max_defect <= 1e-8, "{:?} {:?}: {}", x, y, h.max_defect);
        }
    }
}

#[test]
fn leaky_homomorphism_defect_shrinks_with_window() {
    let params = p2(1);
    let l = xz_generator(params);
    let mut r = rng(21);
    let mut u = one(params);
    let mut v = one(params);
    for s in -1..=1 {
        for (a, b) in [(1, 0), (0, 1), (1, 1)] {
            u = &u + &op(params, &[s], a, b).scale_re(0.3 + 0.1 * (s + a as i64) as f64);
            v = &v
                + &(&op(params, &[s], a, b) * &op(params, &[s + 1], b, a)).scale_re(0.2 - 0.05 * (s - b as i64) as f64);
        }
    }
    let modes = modes_1d(-3..=3, 1);
    let f = test_function(&mut r, 1.0, 4, &modes, 0.6);
    let g = test_function(&mut r, 1.0, 4, &modes, 0.6);
    let spec = ElementSpec::new(u, f, v, g).unwrap();
    let (x, y) = (sz(params, 0), sx(params, 0));
    let ts = grid(1.0, 4);
    let mut last = f64::INFINITY;
    for radius in 1..=3 {
        let w = SiteWindow::cube(&site(&[0]), radius);
        let sys = FlowGeneratorSystem::build(&l, &w, &[x.clone(), y.clone()]).unwrap();
        let h = homomorphism_defect(&sys, &x, &y, &spec, &ts).unwrap();
        assert!(h.within_estimate(), "radius {radius}");
        assert!(h.max_defect < last, "radius {radius}: {} vs {last}", h.max_defect);
        assert!(h.max_defect > 0.0);
        last = h.max_defect;
    }
}

#[test]
fn contraction_examples() {
    let params = p2(1);
    let l = Lindbladian::partial_state(params, StateSpec::maximally_mixed(2)).unwrap();
    let w = SiteWindow::from_sites([&site(&[0])]);
    let sys = FlowGeneratorSystem::build(&l, &w, &[sx(params, 0)]).unwrap();
    let mut r = rng(9);
    let modes = modes_1d(0..=0, l.channels().len());
    let family: Vec<FamilyMember> = (0..2)
        .map(|_| FamilyMember {
            c: coeff(&mut r),
            u: operator(&mut r, params, &[site(&[0])], 2),
            f: test_function(&mut r, 1.0, 2, &modes, 0.5),
        })
        .collect();
    let rep = contraction_check(&sys, &one(params), &family, 1.0).unwrap();
    assert!((rep.lhs - rep.rhs).abs() < 1e-9 * rep.rhs.max(1.0));
    let rep = contraction_check(&sys, &op(params, &[0], 1, 1), &family, 1.0).unwrap();
    assert!((rep.lhs - rep.xi_norm_sq).abs() < 1e-9 * rep.rhs.max(1.0));
    let x = &sx(params, 0) + &sz(params, 0);
    assert!((operator_norm(&x) - 2f64.sqrt()).abs() < 1e-12);
    let rep = contraction_check(&sys, &x, &family, 1.0).unwrap();
    assert!(rep.passes(), "{rep:?}");
    assert!((rep.rhs - 2.0 * rep.xi_norm_sq).abs() < 1e-9 * rep.rhs.max(1.0));
}

#[test]
fn covariance_examples() {
    let params = p2(1);
    let l = xz_generator(params);
    let mut r = rng(13);
    let w = SiteWindow::cube(&site(&[0]), 1);
    let sites = w.sites().to_vec();
    let x = operator(&mut r, params, &sites, 3);
    let u = operator(&mut r, params, &sites, 2);
    let v = operator(&mut r, params, &sites, 2);
    let ts = grid(1.0, 4);
    let vac = ElementSpec::vacuum(u.clone(), v.clone(), 1.0).unwrap();
    let rep = covariance_check(&l, &w, &x, &vac, &site(&[0]), &ts).unwrap();
    assert_eq!(rep.max_deviation, 0.0);
    let rep = covariance_check(&l, &w, &x, &vac, &site(&[2]), &ts).unwrap();
    assert!(rep.max_deviation <= 1e-9);
    let modes = modes_1d(-2..=2, 1);
    let spec =
        ElementSpec::new(u, test_function(&mut r, 1.0, 2, &modes, 0.5), v, test_function(&mut r, 1.0, 2, &modes, 0.5))
            .unwrap();
    let rep = covariance_check(&l, &w, &x, &spec, &site(&[1]), &ts).unwrap();
    assert!(rep.within(2.0, 1e-9), "{rep:?}");
}

#[test]
fn picard_bound_examples() {
    let params = p2(1);
    let l = Lindbladian::translation_covariant(KrausFamily::single(op(params, &[0], 1, 0).scale_re(0.3)));
    let f0 = TestFunction::zero(1.0, 1).unwrap();
    assert!((c_f(&f0, 1.0) - 2.0 * std::f64::consts::E).abs() < 1e-12);
    let x = sz(params, 0);
    let bounds: Vec<f64> = (0..=30).map(|n| picard_error_bound(&l, &x, &f0, 1.0, n).unwrap()).collect();
    let turn = bounds.windows(2).position(|p| p[1] < p[0]).unwrap();
    assert!(bounds[turn..].windows(2).all(|p| p[1] <= p[0]));
    for n in 1..5 {
        assert_eq!(picard_error_bound(&l, &one(params), &f0, 1.0, n).unwrap(), 0.0);
    }
    let nc = Lindbladian::translation_covariant(KrausFamily::single(&sx(params, 0) * &sz(params, 1)));
    assert!(picard_error_bound(&nc, &x, &f0, 1.0, 3).is_err());
}

#[test]
fn picard_agrees_with_ode() {
    let params = p2(1);
    let mut r = rng(17);
    for _ in 0..5 {
        let rop = commuting_r(&mut r, params, 2);
        let rop = rop.scale_re(0.2 / theta(&rop, 1));
        let l = Lindbladian::translation_covariant(KrausFamily::single(rop));
        let w = SiteWindow::cube(&site(&[0]), 2);
        let x = LocalOperator::from_label(params, label(&mut r, params, &[site(&[0])]), coeff(&mut r));
        let u = operator(&mut r, params, w.sites(), 2);
        let v = operator(&mut r, params, w.sites(), 2);
        let modes = modes_1d(-2..=2, 1);
        let t0 = 0.05;
        let f = test_function(&mut r, t0, 2, &modes, 0.3);
        let g = test_function(&mut r, t0, 2, &modes, 0.3);
        let spec = ElementSpec::new(u, f.clone(), v, g).unwrap();
        let sys = FlowGeneratorSystem::build(&l, &w, std::slice::from_ref(&x)).unwrap();
        let n = (1..60).find(|n| picard_error_bound(&l, &x, &f, t0, *n).unwrap() < 1e-8).unwrap();
        let ts = [0.0, t0 / 2.0, t0];
        let p = flow_element(&sys, &x, &spec, &ts, FlowMethod::Picard(n)).unwrap();
        let o = flow_element(&sys, &x, &spec, &ts, FlowMethod::default()).unwrap();
        for (a, b) in p.values.iter().zip(&o.values) {
            assert!((a - b).norm() < 1e-7, "depth {n}: {a} vs {b}");
        }
    }
}

#[test]
fn ode_runs_agree() {
    let params = p2(1);
    let l = xz_generator(params);
    let mut r = rng(19);
    let w = SiteWindow::cube(&site(&[0]), 1);
    let x = operator(&mut r, params, &[site(&[0])], 3);
    let modes = modes_1d(-2..=2, 1);
    let spec = ElementSpec::new(
        sx(params, 0),
        test_function(&mut r, 1.0, 4, &modes, 0.5),
        one(params),
        test_function(&mut r, 1.0, 4, &modes, 0.5),
    )
    .unwrap();
    let sys = FlowGeneratorSystem::build(&l, &w, std::slice::from_ref(&x)).unwrap();
    let ts = grid(1.0, 4);
    let a = flow_element(&sys, &x, &spec, &ts, FlowMethod::Ode(Some(OdeMethod::Rk4 { substeps: 64 }))).unwrap();
    let b = flow_element(&sys, &x, &spec, &ts, FlowMethod::Ode(Some(OdeMethod::Rk4 { substeps: 128 }))).unwrap();
    let e = flow_element(&sys, &x, &spec, &ts, FlowMethod::Ode(Some(OdeMethod::Expm))).unwrap();
    for ((p, q), s) in a.values.iter().zip(&b.values).zip(&e.values) {
        assert!((p - q).norm() < 1e-8);
        assert!((q - s).norm() < 1e-8);
    }
}

#[test]
fn eta_site_flow_matches_closed_form() {
    let params = p2(1);
    let state = StateSpec::diagonal(&[0.8, 0.2]).unwrap();
    let k = site(&[0]);
    let mut r = rng(23);
    let x = operator(&mut r, params, std::slice::from_ref(&k), 3);
    let u = operator(&mut r, params, std::slice::from_ref(&k), 3);
    let v = operator(&mut r, params, std::slice::from_ref(&k), 3);
    let spec = ElementSpec::vacuum(u.clone(), v.clone(), 2.0).unwrap();
    let ts = grid(2.0, 8);
    let tr = eta_site_flow(params, &state, &k, &x, &spec, &ts).unwrap();
    for (t, a) in ts.iter().zip(&tr.values) {
        let b = vacuum_inner(&u, &partial_semigroup_exact(&state, &x, *t).unwrap(), &v);
        assert!((a - b).norm() < 1e-9, "t={t}");
    }
    let tr1 = eta_site_flow(params, &state, &k, &one(params), &spec, &ts).unwrap();
    assert!(tr1.values.iter().all(|v| (v - tr1.values[0]).norm() < 1e-10));
    assert!(eta_site_flow(params, &state, &k, &sx(params, 1), &spec, &ts).is_err());
}

#[test]
fn eta_product_factorizes() {
    let params = p2(1);
    let state = StateSpec::maximally_mixed(2);
    let l = Lindbladian::partial_state(params, state.clone()).unwrap();
    let channels = l.channels().len();
    let mut r = rng(29);
    let modes = modes_1d(-1..=2, channels);
    let f = test_function(&mut r, 1.0, 2, &modes, 0.4);
    let g = test_function(&mut r, 1.0, 2, &modes, 0.4);
    let factors: Vec<SiteFactor> = (0..2)
        .map(|s| SiteFactor {
            site: site(&[s]),
            x: operator(&mut r, params, &[site(&[s])], 2),
            u: operator(&mut r, params, &[site(&[s])], 2),
            v: operator(&mut r, params, &[site(&[s])], 2),
        })
        .collect();
    let prod = |ops: &dyn Fn(&SiteFactor) -> &LocalOperator| factors.iter().fold(one(params), |acc, s| &acc * ops(s));
    let (x, u, v) = (prod(&|s| &s.x), prod(&|s| &s.u), prod(&|s| &s.v));
    let lambda = SiteWindow::from_sites(line(1, 2).iter());
    let ts = grid(1.0, 4);
    let spec = ElementSpec::new(u, f.clone(), v, g.clone()).unwrap();
    let direct = eta_product_flow(params, &state, &lambda, &x, &spec, &ts).unwrap();
    let fact = eta_product_factorized(params, &state, &factors, &f, &g, &ts).unwrap();
    let rev: Vec<SiteFactor> = factors.iter().rev().cloned().collect();
    let fact_rev = eta_product_factorized(params, &state, &rev, &f, &g, &ts).unwrap();
    for ((a, b), c) in direct.values.iter().zip(&fact).zip(&fact_rev) {
        assert!((a - b).norm() < 1e-9 * a.norm().max(1.0), "{a} vs {b}");
        assert!((b - c).norm() < 1e-12 * b.norm().max(1.0));
    }

    let x = &sx(params, 0) * &sx(params, 1);
    let vac = ElementSpec::vacuum(one(params), one(params), 1.0).unwrap();
    let tr = eta_product_flow(params, &state, &lambda, &x, &vac, &ts).unwrap();
    assert!(tr.values.iter().all(|v| v.norm() < 1e-12));
}

#[test]
fn ergodicity_scan_examples() {
    let params = p2(1);
    let state = StateSpec::maximally_mixed(2);
    let ts = grid(15.0, 60);
    let vac = ElementSpec::vacuum(one(params), one(params), 15.0).unwrap();
    let s = eta_ergodicity_scan(params, &state, &sx(params, 0), &vac, &ts).unwrap();
    assert!(s.distance.iter().all(|d| *d == 0.0));
    let vac = ElementSpec::vacuum(sx(params, 0), one(params), 15.0).unwrap();
    let s = eta_ergodicity_scan(params, &state, &sx(params, 0), &vac, &ts).unwrap();
    let fit = s.fit.unwrap();
    assert!((fit.rate - 1.0).abs() < 1e-3, "{fit:?}");
    let s = eta_ergodicity_scan(params, &state, &one(params), &vac, &ts).unwrap();
    assert!(s.distance.iter().all(|d| *d < 1e-10));

    let mut r = rng(31);
    let l = Lindbladian::partial_state(params, state.clone()).unwrap();
    let modes = modes_1d(-1..=1, l.channels().len());
    let mut f = test_function(&mut r, 15.0, 30, &modes, 0.5);
    let mut g = test_function(&mut r, 15.0, 30, &modes, 0.5);
    f = f.restrict(|_| true);
    g = g.restrict(|_| true);
    let cut = |t: &TestFunction| {
        let mut out = TestFunction::zero(15.0, 30).unwrap();
        for (m, s) in t.modes() {
            let vals = s.values().iter().enumerate().map(|(i, v)| if i < 4 { *v } else { c(0.0, 0.0) }).collect();
            out = out.with_mode(m.clone(), StepFunction::new(15.0, vals).unwrap()).unwrap();
        }
        out
    };
    let spec = ElementSpec::new(sx(params, 0), cut(&f), &one(params) + &sz(params, 0), cut(&g)).unwrap();
    let x = &sx(params, 0) + &op(params, &[0], 1, 1).scale(c(0.0, 0.5));
    let s = eta_ergodicity_scan(params, &state, &x, &spec, &ts).unwrap();
    let fit = s.fit.clone().unwrap();
    assert!((fit.rate - 1.0).abs() < 1e-2, "{fit:?}");
    assert!(*s.distance.last().unwrap() < 1e-6);
}

#[test]
fn hp_witness_counts_lattice_points() {
    let r1 = op(p2(1), &[0], 1, 0);
    let s = hp_divergence_witness(&r1, &one(p2(1)), 10).unwrap();
    for (k, v) in s.iter().enumerate() {
        assert_eq!(*v, (2 * (k + 1) + 1) as f64);
    }
    let s = hp_divergence_witness(&LocalOperator::zero(p2(1)), &one(p2(1)), 5).unwrap();
    assert!(s.iter().all(|v| *v == 0.0));
    let r2 = op(p2(2), &[0, 0], 1, 0);
    let s = hp_divergence_witness(&r2, &one(p2(2)), 4).unwrap();
    for (k, v) in s.iter().enumerate() {
        assert_eq!(*v, ((2 * (k + 1) + 1) as f64).powi(2));
    }
    assert!(hp_divergence_witness(&r1, &one(p2(1)), 0).is_err());
}

#[test]
fn trajectory_csv_has_header_and_rows() {
    let params = p2(1);
    let l = Lindbladian::partial_state(params, StateSpec::maximally_mixed(2)).unwrap();
    let w = SiteWindow::from_sites([&site(&[0])]);
    let sys = FlowGeneratorSystem::build(&l, &w, &[sx(params, 0)]).unwrap();
    let spec = ElementSpec::vacuum(sx(params, 0), one(params), 1.0).unwrap();
    let tr = flow_element(&sys, &sx(params, 0), &spec, &[0.0, 1.0], FlowMethod::default()).unwrap();
    let mut out = Vec::new();
    tr.write_csv("x", &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("t,label,re,im,err"));
}

#[test]
fn out_of_grid_times_rejected() {
    let params = p2(1);
    let l = Lindbladian::partial_state(params, StateSpec::maximally_mixed(2)).unwrap();
    let w = SiteWindow::from_sites([&site(&[0])]);
    let sys = FlowGeneratorSystem::build(&l, &w, &[sx(params, 0)]).unwrap();
    let spec = ElementSpec::vacuum(one(params), one(params), 1.0).unwrap();
    assert!(flow_element(&sys, &sx(params, 0), &spec, &[2.0], FlowMethod::default()).is_err());
    assert!(FlowGeneratorSystem::build(&l, &w, &[sx(params, 3)]).is_err());
}

#[test]
fn delta_matrices_reproduce_symbolic_maps() {
    let params = p2(1);
    let l = xz_generator(params);
    let w = SiteWindow::cube(&site(&[0]), 2);
    let sys = FlowGeneratorSystem::build(&l, &w, &[sz(params, 0)]).unwrap();
    let channels = l.channels();
    for (j, m) in sys.noise_modes().iter().enumerate() {
        for (b, label) in sys.basis().iter().enumerate() {
            let u = LocalOperator::from_label(params, label.clone(), c(1.0, 0.0));
            let img = l.delta(channels[m.channel], &m.site, &u);
            if img.support().iter().all(|s| w.contains(s)) {
                let col = LocalOperator::from_terms(
                    params,
                    sys.delta_matrix(j).column(b).iter().map(|(i, v)| (sys.basis()[*i].clone(), *v)),
                );
                assert!(col.approx_eq(&img, 1e-14));
            }
        }
    }
    let e = nalgebra::DVector::from_element(sys.dim(), c(1.0, 0.0));
    assert_eq!(sys.lhat_matrix().apply(&e).len(), sys.dim());
    let _ = WeylLabel::identity();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unitality_property(seed in 0u64..10_000) {
        let params = p2(1);
        let mut r = rng(seed);
        let rop = operator(&mut r, params, &line(1, 2), 2);
        let l = Lindbladian::translation_covariant(KrausFamily::single(rop));
        let w = SiteWindow::cube(&site(&[0]), 1);
        let sites = w.sites().to_vec();
        let modes = modes_1d(-2..=2, 1);
        let spec = ElementSpec::new(
            operator(&mut r, params, &sites, 2),
            test_function(&mut r, 1.0, 2, &modes, 0.5),
            operator(&mut r, params, &sites, 2),
            test_function(&mut r, 1.0, 2, &modes, 0.5),
        ).unwrap();
        let sys = FlowGeneratorSystem::build(&l, &w, &[]).unwrap();
        let tr = flow_element(&sys, &one(params), &spec, &grid(1.0, 4), FlowMethod::default()).unwrap();
        let scale = tr.values[0].norm().max(1.0);
        for v in &tr.values {
            prop_assert!((v - tr.values[0]).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn pair_initial_values_match_products(seed in 0u64..10_000) {
        let params = p2(1);
        let mut r = rng(seed);
        let l = xz_generator(params);
        let w = SiteWindow::cube(&site(&[0]), 1);
        let sites = w.sites().to_vec();
        let (x, y) = (operator(&mut r, params, &sites, 2), operator(&mut r, params, &sites, 2));
        let (u, v) = (operator(&mut r, params, &sites, 2), operator(&mut r, params, &sites, 2));
        let spec = ElementSpec::vacuum(u, v, 1.0).unwrap();
        let sys = FlowGeneratorSystem::build(&l, &w, &[&x * &y]).unwrap();
        let g = pair_element(&sys, &[(x.clone(), y.clone())], &spec, &[0.0], None).unwrap();
        let f = flow_element(&sys, &(&x * &y), &spec, &[0.0], FlowMethod::default()).unwrap();
        prop_assert!((g.values[0][0] - f.values[0]).norm() < 1e-12);
    }
}
