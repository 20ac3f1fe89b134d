//! The acceptance criteria as runnable suites. Each returns its verdicts and
//! any tables it produced; engine errors become failing verdicts.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use uhf_core::dense::{realize, SiteWindow, StateSpec};
use uhf_core::fock::{
    contraction_check, covariance_check, eta_ergodicity_scan, flow_element, homomorphism_defect, hp_divergence_witness,
    picard_error_bound, ElementSpec, FamilyMember, FlowGeneratorSystem, FlowMethod, Mode, StepFunction, TestFunction,
};
use uhf_core::lindblad::{
    decay_rate_fit, ergodic_state, evolve, leibniz_expansion_check, lemma_bound_report, partial_semigroup_exact,
    perturbed_ergodic_state, BoundMode, EvolveMethod, EvolveOptions, KrausFamily, Lindbladian, QuadSpec, Truncation,
};
use uhf_core::ode::OdeMethod;
use uhf_core::weyl::{
    seminorm_one, theta, AlgebraParams, GnsVector, LocalOperator, SeminormVariant, Site, SiteExponent, WeylLabel,
};
use uhf_core::C64;

use crate::report::{num, Table, Verdict};

pub const CRITERIA: usize = 13;

#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub id: usize,
    pub title: &'static str,
    pub verdicts: Vec<Verdict>,
    pub tables: Vec<(String, Table)>,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn pass(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.pass)
    }

    /// One line: `criterion  5 FAIL  title  [failing verdicts]`.
    pub fn summary_line(&self) -> String {
        let failing: Vec<String> = self
            .verdicts
            .iter()
            .filter(|v| !v.pass)
            .map(|v| format!("{}: {:e} {} {:e}", v.name, v.measured, v.relation, v.threshold))
            .collect();
        let status = if self.pass() { "PASS" } else { "FAIL" };
        let mut line = format!("criterion {:>2} {status}  {}  ({:.1}s)", self.id, self.title, self.seconds);
        if !failing.is_empty() {
            line.push_str(&format!("  [{}]", failing.join("; ")));
        }
        line
    }
}

pub fn title(id: usize) -> &'static str {
    match id {
        1 => "algebra matches dense oracle",
        2 => "generator identities",
        3 => "semigroup correctness",
        4 => "partial-state closed form and ergodic decay",
        5 => "perturbed decay rates monotone in c",
        6 => "derivation expansion and bounds",
        7 => "flow unitality and vacuum reduction",
        8 => "flow homomorphism",
        9 => "flow contraction",
        10 => "flow covariance",
        11 => "flow ergodicity",
        12 => "Picard and ODE uniqueness",
        13 => "divergence witness counts",
        _ => "unknown",
    }
}

type Body = fn(u64) -> (Vec<Verdict>, Vec<(String, Table)>);

fn body(id: usize) -> Option<Body> {
    Some(match id {
        1 => c01_algebra,
        2 => c02_identities,
        3 => c03_semigroup,
        4 => c04_partial_state,
        5 => c05_perturbation,
        6 => c06_lemma,
        7 => c07_vacuum,
        8 => c08_homomorphism,
        9 => c09_contraction,
        10 => c10_covariance,
        11 => c11_ergodicity,
        12 => c12_picard,
        13 => c13_witness,
        _ => return None,
    })
}

pub fn run_criterion(id: usize, seed: u64) -> CriterionOutcome {
    let started = Instant::now();
    let (verdicts, tables) = match body(id) {
        Some(f) => f(seed),
        None => (vec![Verdict::flag("known criterion", false)], Vec::new()),
    };
    CriterionOutcome { id, title: title(id), verdicts, tables, seconds: started.elapsed().as_secs_f64() }
}

/// All criteria, in parallel, ordered by id.
pub fn run_all(seed: u64) -> Vec<CriterionOutcome> {
    (1..=CRITERIA).into_par_iter().map(|id| run_criterion(id, seed)).collect()
}

fn failed(name: &str, e: impl std::fmt::Display) -> Verdict {
    Verdict::flag(name, false).with_note(e.to_string())
}

/// Runs `f`, turning an engine error into a failing verdict.
fn guard(out: &mut Vec<Verdict>, name: &str, f: impl FnOnce() -> Result<Vec<Verdict>, uhf_core::Error>) {
    match f() {
        Ok(v) => out.extend(v),
        Err(e) => out.push(failed(name, e)),
    }
}

// Random instances.

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn p2(d: usize) -> AlgebraParams {
    AlgebraParams::new(2, d).expect("valid parameters")
}

fn s1(k: i64) -> Site {
    Site::new(&[k])
}

fn op(params: AlgebraParams, s: &Site, a: u32, b: u32) -> LocalOperator {
    LocalOperator::site_op(params, s.clone(), a, b)
}

fn coeff(r: &mut impl Rng) -> C64 {
    C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

fn random_label(r: &mut impl Rng, params: AlgebraParams, sites: &[Site]) -> WeylLabel {
    let n = params.n();
    let mut entries = Vec::new();
    for s in sites {
        if r.random_bool(0.6) {
            entries.push((s.clone(), SiteExponent::new(r.random_range(0..n), r.random_range(0..n))));
        }
    }
    WeylLabel::from_entries(entries)
}

fn random_op(r: &mut impl Rng, params: AlgebraParams, sites: &[Site], terms: usize) -> LocalOperator {
    let t: Vec<_> = (0..terms).map(|_| (random_label(r, params, sites), coeff(r))).collect();
    LocalOperator::from_terms(params, t)
}

/// Traceless operator with at least one term on `sites`.
fn random_traceless(r: &mut impl Rng, params: AlgebraParams, sites: &[Site], terms: usize) -> LocalOperator {
    loop {
        let x = random_op(r, params, sites, terms);
        let x = &x - &LocalOperator::scalar(params, x.trace());
        if !x.is_zero() {
            return x;
        }
    }
}

fn line(d: usize, len: i64) -> Vec<Site> {
    (0..len)
        .map(|i| {
            let mut c = vec![0; d];
            c[0] = i;
            Site::new(&c)
        })
        .collect()
}

/// Three sites: a line in `d = 1`, an L shape in `d = 2`.
fn three_sites(d: usize) -> Vec<Site> {
    if d == 1 {
        line(1, 3)
    } else {
        vec![Site::new(&[0, 0]), Site::new(&[1, 0]), Site::new(&[0, 1])]
    }
}

fn random_generator(r: &mut impl Rng, params: AlgebraParams) -> Lindbladian {
    let sites = line(params.d(), 2);
    let members = r.random_range(1..=2);
    let ops = (0..members).map(|_| random_op(r, params, &sites, 2)).collect();
    Lindbladian::translation_covariant(KrausFamily::new(ops).expect("nonempty family"))
}

fn random_single_r(r: &mut impl Rng, params: AlgebraParams) -> Lindbladian {
    let sites = line(params.d(), 2);
    Lindbladian::translation_covariant(KrausFamily::single(random_op(r, params, &sites, 2)))
}

fn random_state(r: &mut impl Rng) -> StateSpec {
    let p: f64 = r.random_range(0.05..0.95);
    let bound = 0.6 * (p * (1.0 - p)).sqrt();
    let a = C64::new(r.random_range(-bound..bound), r.random_range(-bound..bound));
    let m = DMatrix::from_row_slice(2, 2, &[C64::new(p, 0.0), a, a.conj(), C64::new(1.0 - p, 0.0)]);
    StateSpec::new(m).expect("positive by construction")
}

/// `r` built from powers of one Weyl word, so all translates commute.
fn commuting_r(r: &mut impl Rng, params: AlgebraParams, span: i64) -> LocalOperator {
    let n = params.n();
    let e = loop {
        let e = SiteExponent::new(r.random_range(0..n), r.random_range(0..n));
        if !e.is_identity() {
            break e;
        }
    };
    let sites = line(params.d(), span);
    let mut terms = Vec::new();
    for _ in 0..r.random_range(1..=3) {
        let mut entries: Vec<_> = sites.iter().filter(|_| r.random_bool(0.6)).map(|s| (s.clone(), e)).collect();
        if entries.is_empty() {
            entries.push((sites[0].clone(), e));
        }
        terms.push((WeylLabel::from_entries(entries), coeff(r)));
    }
    LocalOperator::from_terms(params, terms)
}

/// `u = x + noise`, `v = 1 + noise`, so `<u, x v>` is not accidentally zero.
fn anchored(r: &mut impl Rng, x: &LocalOperator, sites: &[Site]) -> (LocalOperator, LocalOperator) {
    let params = x.params();
    let u = x + &random_op(r, params, sites, 2).scale_re(0.5);
    let v = &LocalOperator::identity(params) + &random_op(r, params, sites, 2).scale_re(0.5);
    (u, v)
}

fn step(r: &mut impl Rng, t_max: f64, cells: usize, active: usize, scale: f64) -> StepFunction {
    let values = (0..cells).map(|i| if i < active { coeff(r) * scale } else { C64::new(0.0, 0.0) }).collect();
    StepFunction::new(t_max, values).expect("valid grid")
}

fn test_function(
    r: &mut impl Rng,
    t_max: f64,
    cells: usize,
    active: usize,
    modes: &[Mode],
    scale: f64,
) -> TestFunction {
    let mut f = TestFunction::zero(t_max, cells).expect("valid grid");
    for m in modes {
        f = f.with_mode(m.clone(), step(r, t_max, cells, active, scale)).expect("shared grid");
    }
    f
}

fn modes(sites: &[Site], channels: usize) -> Vec<Mode> {
    sites.iter().flat_map(|s| (0..channels).map(move |c| Mode::new(s.clone(), c))).collect()
}

fn range_sites(lo: i64, hi: i64) -> Vec<Site> {
    (lo..=hi).map(s1).collect()
}

fn grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
}

fn max(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

// Criteria.

fn c01_algebra(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let started = Instant::now();
    let mut r = rng(seed, 1);
    let (mut prod, mut adj, mut comm) = (0.0f64, 0.0f64, 0.0f64);
    let mut errors = Vec::new();
    for i in 0..500 {
        let d = 1 + i % 2;
        let params = p2(d);
        let sites = three_sites(d);
        let w = SiteWindow::from_sites(sites.iter());
        let x = random_op(&mut r, params, &sites, 4);
        let y = random_op(&mut r, params, &sites, 4);
        let m = |a: &LocalOperator| realize(a, &w).map(|o| o.matrix);
        match (m(&x), m(&y), m(&(&x * &y)), m(&x.adjoint()), m(&x.commutator(&y))) {
            (Ok(mx), Ok(my), Ok(mxy), Ok(mxa), Ok(mc)) => {
                prod = prod.max((&mxy - &mx * &my).camax());
                adj = adj.max((&mxa - mx.adjoint()).camax());
                comm = comm.max((&mc - (&mx * &my - &my * &mx)).camax());
            }
            _ => errors.push(i),
        }
    }
    let mut v = vec![
        Verdict::at_most("product defect", prod, 1e-12),
        Verdict::at_most("adjoint defect", adj, 1e-12),
        Verdict::at_most("commutator defect", comm, 1e-12),
        Verdict::at_most("runtime seconds", started.elapsed().as_secs_f64(), 30.0),
    ];
    if !errors.is_empty() {
        v.push(failed("realisation", format!("{} instances failed", errors.len())));
    }
    (v, Vec::new())
}

fn c02_identities(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut r = rng(seed, 2);
    let (mut unit, mut star, mut cocycle, mut cov) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..200 {
        let d = 1 + i % 2;
        let params = p2(d);
        let l = if i % 4 == 3 {
            Lindbladian::partial_state(params, random_state(&mut r)).expect("valid state")
        } else {
            random_generator(&mut r, params)
        };
        let sites = three_sites(d);
        let x = random_op(&mut r, params, &sites, 3);
        let y = random_op(&mut r, params, &sites, 3);
        let zero = LocalOperator::zero(params);
        unit = unit.max(l.lind_total(&LocalOperator::identity(params)).max_coeff_diff(&zero));
        star = star.max(l.lind_total(&x.adjoint()).max_coeff_diff(&l.lind_total(&x).adjoint()));
        let lhs = l.lind_total(&(&x * &y));
        let mut rhs = &(&x * &l.lind_total(&y)) + &(&l.lind_total(&x) * &y);
        let base = l.base_support();
        for ch in l.channels() {
            for k in Lindbladian::contributing_shifts(&base, &x.support()) {
                rhs = &rhs + &(&l.delta_dag(ch, &k, &x) * &l.delta(ch, &k, &y));
            }
        }
        cocycle = cocycle.max(lhs.max_coeff_diff(&rhs));
        let coords: Vec<i64> = (0..d).map(|_| r.random_range(-3..=3)).collect();
        let j = Site::new(&coords);
        cov = cov.max(l.lind_total(&x.translate(&j)).max_coeff_diff(&l.lind_total(&x).translate(&j)));
    }
    (
        vec![
            Verdict::at_most("L(1) = 0", unit, 1e-12),
            Verdict::at_most("L(x*) = L(x)*", star, 1e-12),
            Verdict::at_most("cocycle identity", cocycle, 1e-12),
            Verdict::at_most("covariance", cov, 1e-12),
        ],
        Vec::new(),
    )
}

fn c03_semigroup(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut out = Vec::new();
    let mut r = rng(seed, 3);
    let params = p2(1);
    let w = SiteWindow::from_sites(line(1, 3).iter());
    let interior = |m: EvolveMethod| EvolveOptions {
        window: Some(w.clone()),
        truncation: Truncation::Interior,
        ..EvolveOptions::with_method(m)
    };
    let ts = [0.25, 0.5, 1.0];
    let (mut series, mut ode) = (0.0f64, 0.0f64);
    let (mut law, mut unital) = (0.0f64, 0.0f64);
    let mut choi = f64::INFINITY;
    let res: Result<(), uhf_core::Error> = (|| {
        for _ in 0..12 {
            let l = random_generator(&mut r, params);
            let x = random_op(&mut r, params, &line(1, 3), 4);
            let oracle = evolve(&l, &x, &ts, &interior(EvolveMethod::Oracle))?;
            let s = evolve(&l, &x, &ts, &interior(EvolveMethod::Series))?;
            let o = evolve(&l, &x, &ts, &interior(EvolveMethod::Ode))?;
            for ((a, b), c) in s.values.iter().zip(&o.values).zip(&oracle.values) {
                series = series.max(a.max_coeff_diff(c));
                ode = ode.max(b.max_coeff_diff(c));
            }
        }
        for _ in 0..4 {
            let l = random_generator(&mut r, params);
            let x = random_op(&mut r, params, &line(1, 3), 3);
            let opts = interior(EvolveMethod::Ode);
            let direct = evolve(&l, &x, &[0.7], &opts)?.values.remove(0);
            let half = evolve(&l, &x, &[0.3], &opts)?.values.remove(0);
            let composed = evolve(&l, &half, &[0.4], &opts)?.values.remove(0);
            law = law.max(direct.max_coeff_diff(&composed));
            let one = LocalOperator::identity(params);
            for v in evolve(&l, &one, &[0.5, 1.0], &opts)?.values {
                unital = unital.max(v.max_coeff_diff(&one));
            }
            let small = SiteWindow::from_sites(line(1, 2).iter());
            let sup = l.superoperator(&small, Truncation::Interior.closure_mode())?;
            for t in [0.1, 0.5, 1.0] {
                choi = choi.min(sup.choi_min_eigenvalue(t)?);
            }
        }
        Ok(())
    })();
    match res {
        Ok(()) => out.extend([
            Verdict::at_most("series vs oracle", series, 1e-9),
            Verdict::at_most("ode vs oracle", ode, 1e-9),
            Verdict::at_most("semigroup law", law, 1e-10),
            Verdict::at_most("P_t(1) = 1", unital, 1e-10),
            Verdict::at_least("Choi min eigenvalue", choi, -1e-9),
        ]),
        Err(e) => out.push(failed("semigroup suite", e)),
    }
    (out, Vec::new())
}

fn c04_partial_state(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut out = Vec::new();
    let mut tables = Vec::new();
    let mut r = rng(seed, 4);
    let params = p2(1);
    guard(&mut out, "closed form", || {
        let mut worst = 0.0f64;
        for _ in 0..8 {
            let st = random_state(&mut r);
            let l = Lindbladian::partial_state(params, st.clone())?;
            let x = random_op(&mut r, params, &line(1, 2), 4);
            let ts = [0.3, 1.0, 2.5];
            let ev = evolve(&l, &x, &ts, &EvolveOptions::with_method(EvolveMethod::Ode))?;
            for (t, v) in ts.iter().zip(&ev.values) {
                worst = worst.max(v.max_coeff_diff(&partial_semigroup_exact(&st, &x, *t)?));
            }
        }
        Ok(vec![Verdict::at_most("closed form vs generic", worst, 1e-10)])
    });
    guard(&mut out, "decay fit", || {
        let st = random_state(&mut r);
        let l = Lindbladian::partial_state(params, st.clone())?;
        let x = random_traceless(&mut r, params, &[s1(0)], 3);
        let phi = LocalOperator::scalar(params, ergodic_state(&st, &x)?);
        let ts = grid(10.0, 40);
        let ev = evolve(&l, &x, &ts, &EvolveOptions::with_method(EvolveMethod::Ode))?;
        let dist: Vec<f64> = ev.values.iter().map(|v| uhf_core::dense::operator_norm(&(v - &phi))).collect();
        let mut t = Table::new(&["t", "distance"]);
        for (a, b) in ts.iter().zip(&dist) {
            t.row(vec![num(*a), num(*b)]);
        }
        tables.push(("partial_state_decay.csv".to_string(), t));
        let fit = decay_rate_fit(&ts, &dist)?;
        Ok(vec![
            Verdict::at_most("rate - 1", (fit.rate - 1.0).abs(), 1e-3),
            Verdict::at_least("fit r^2", fit.r2, 0.9999),
        ])
    });
    guard(&mut out, "perturbed c = 0", || {
        let st = random_state(&mut r);
        let rop = random_op(&mut r, params, &line(1, 2), 2);
        let l = Lindbladian::perturbed(params, st.clone(), KrausFamily::single(rop), 0.0)?;
        let x = random_op(&mut r, params, &line(1, 2), 3);
        let pv = perturbed_ergodic_state(&l, &x, &QuadSpec::default())?;
        Ok(vec![Verdict::at_most("Phi^(0) - Phi", (pv.value - ergodic_state(&st, &x)?).norm(), 1e-6)])
    });
    (out, tables)
}

/// Fitted decay rate of `||P_t^(c)(x)||_1` for a single-site `r` and `x`.
pub fn perturbed_rate(c: f64) -> Result<(f64, f64), uhf_core::Error> {
    let params = p2(1);
    let o = s1(0);
    let st = StateSpec::diagonal(&[0.7, 0.3])?;
    let rop = &(&op(params, &o, 1, 0).scale_re(0.8) + &op(params, &o, 0, 1).scale_re(0.5))
        + &op(params, &o, 1, 1).scale(C64::new(0.0, 0.3));
    let l = Lindbladian::perturbed(params, st, KrausFamily::single(rop), c)?;
    let x = &op(params, &o, 1, 0) + &op(params, &o, 0, 1).scale_re(0.5);
    let ts = grid(8.0, 32);
    let w = SiteWindow::from_sites([&o]);
    let opts = EvolveOptions {
        window: Some(w),
        truncation: Truncation::Interior,
        ..EvolveOptions::with_method(EvolveMethod::Ode)
    };
    let ev = evolve(&l, &x, &ts, &opts)?;
    let semi: Vec<f64> = ev.values.iter().map(|v| seminorm_one(v, SeminormVariant::Exponentiated)).collect();
    let fit = decay_rate_fit(&ts, &semi)?;
    Ok((fit.rate, fit.r2))
}

fn c05_perturbation(_seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let cs = [0.0, 0.05, 0.1];
    let mut out = Vec::new();
    let mut t = Table::new(&["c", "rate", "r2"]);
    let mut rates = Vec::new();
    for c in cs {
        match perturbed_rate(c) {
            Ok((rate, r2)) => {
                t.row(vec![num(c), num(rate), num(r2)]);
                out.push(Verdict::at_least(format!("rate(c = {c}) > 0"), rate, f64::MIN_POSITIVE));
                rates.push(rate);
            }
            Err(e) => out.push(failed(&format!("rate(c = {c})"), e)),
        }
    }
    if rates.len() == cs.len() {
        let worst_rise = max(rates.windows(2).map(|w| w[1] - w[0]));
        out.push(
            Verdict::at_most("largest rise of rate with c", worst_rise, 0.0)
                .with_note(format!("rates {rates:?} for c = {cs:?}")),
        );
    }
    (out, vec![("perturbation_rates.csv".to_string(), t)])
}

fn c06_lemma(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let started = Instant::now();
    let mut out = Vec::new();
    let mut r = rng(seed, 6);
    let params = p2(1);
    guard(&mut out, "expansion identity", || {
        let mut worst = 0.0f64;
        for n in 1..=3usize {
            for _ in 0..6 {
                let l = Lindbladian::translation_covariant(KrausFamily::single(commuting_r(&mut r, params, 2)));
                let x = random_op(&mut r, params, &line(1, 2), 3);
                let kbar: Vec<Site> = (0..n).map(|_| s1(r.random_range(-1..=1))).collect();
                worst = worst.max(leibniz_expansion_check(&l, &x, &kbar)?);
            }
        }
        Ok(vec![Verdict::at_most("expansion defect", worst, 1e-12)])
    });
    let mut t = Table::new(&["instance", "mode", "order", "lhs", "rhs"]);
    guard(&mut out, "bounds", || {
        let mut worst_ratio = 0.0f64;
        let mut violations = 0usize;
        for i in 0..100 {
            let l = Lindbladian::translation_covariant(KrausFamily::single(commuting_r(&mut r, params, 2)));
            let x = random_op(&mut r, params, &line(1, 2), 2);
            let n = 1 + i % 3;
            let signs = |r: &mut ChaCha8Rng, zero: bool, len: usize| -> Vec<i8> {
                (0..len)
                    .map(|_| loop {
                        let e = r.random_range(-1..=1);
                        if zero || e != 0 {
                            break e;
                        }
                    })
                    .collect()
            };
            let (name, mode) = match i % 3 {
                0 => ("pure", BoundMode::Pure(signs(&mut r, false, n))),
                1 => ("mixed", BoundMode::Mixed(signs(&mut r, true, n))),
                _ => {
                    let y = random_op(&mut r, params, &line(1, 2), 2);
                    let m = 1 + (i / 3) % 2;
                    let eps = signs(&mut r, false, n.min(2));
                    let eps1 = signs(&mut r, false, m);
                    let eps2 = signs(&mut r, false, 1);
                    ("product", BoundMode::Product { y, eps, eps1, eps2 })
                }
            };
            let rep = lemma_bound_report(&l, &x, &mode)?;
            if !rep.holds() {
                violations += 1;
            }
            if rep.rhs > 0.0 {
                worst_ratio = worst_ratio.max(rep.lhs / rep.rhs);
            }
            t.row(vec![i.to_string(), name.into(), n.to_string(), num(rep.lhs), num(rep.rhs)]);
        }
        Ok(vec![
            Verdict::at_most("bound violations", violations as f64, 0.0),
            Verdict::at_most("largest lhs / rhs", worst_ratio, 1.0),
        ])
    });
    out.push(Verdict::at_most("runtime seconds", started.elapsed().as_secs_f64(), 60.0));
    (out, vec![("lemma_bounds.csv".to_string(), t)])
}

fn c07_vacuum(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut out = Vec::new();
    let mut r = rng(seed, 7);
    let params = p2(1);
    let ts = grid(2.0, 8);
    guard(&mut out, "unitality", || {
        let mut worst = 0.0f64;
        for _ in 0..8 {
            let l = random_single_r(&mut r, params);
            let w = SiteWindow::cube(&s1(0), 1);
            let sites = w.sites().to_vec();
            let ms = modes(&range_sites(-2, 2), 1);
            let one = LocalOperator::identity(params);
            let (u, v) = anchored(&mut r, &one, &sites);
            let spec = ElementSpec::new(
                u,
                test_function(&mut r, 2.0, 4, 4, &ms, 0.5),
                v,
                test_function(&mut r, 2.0, 4, 4, &ms, 0.5),
            )?;
            let sys = FlowGeneratorSystem::build(&l, &w, &[])?;
            let tr = flow_element(&sys, &one, &spec, &ts, FlowMethod::default())?;
            let scale = tr.values[0].norm().max(1.0);
            worst = worst.max(max(tr.values.iter().map(|v| (v - tr.values[0]).norm() / scale)));
        }
        Ok(vec![Verdict::at_most("F_t(1) drift", worst, 1e-9)])
    });
    guard(&mut out, "vacuum single-r", || {
        let mut worst = 0.0f64;
        for _ in 0..6 {
            let l = random_single_r(&mut r, params);
            let w = SiteWindow::cube(&s1(0), 1);
            let sites = w.sites().to_vec();
            let x = random_op(&mut r, params, &[s1(0)], 3);
            let (u, v) = anchored(&mut r, &x, &sites);
            let sys = FlowGeneratorSystem::build(&l, &w, std::slice::from_ref(&x))?;
            let tr =
                flow_element(&sys, &x, &ElementSpec::vacuum(u.clone(), v.clone(), 2.0)?, &ts, FlowMethod::default())?;
            let opts = EvolveOptions {
                window: Some(w),
                truncation: Truncation::Open,
                ..EvolveOptions::with_method(EvolveMethod::Ode)
            };
            let ev = evolve(&l, &x, &ts, &opts)?;
            for (a, p) in tr.values.iter().zip(&ev.values) {
                worst = worst.max((a - GnsVector(u.clone()).inner(&GnsVector(p * &v))).norm());
            }
        }
        Ok(vec![Verdict::at_most("vacuum j_t vs P_t", worst, 1e-8)])
    });
    guard(&mut out, "vacuum eta", || {
        let mut worst = 0.0f64;
        for _ in 0..6 {
            let st = random_state(&mut r);
            let l = Lindbladian::partial_state(params, st.clone())?;
            let sites = line(1, 2);
            let w = SiteWindow::from_sites(sites.iter());
            let x = random_op(&mut r, params, &sites, 3);
            let (u, v) = anchored(&mut r, &x, &sites);
            let sys = FlowGeneratorSystem::build(&l, &w, std::slice::from_ref(&x))?;
            let tr =
                flow_element(&sys, &x, &ElementSpec::vacuum(u.clone(), v.clone(), 2.0)?, &ts, FlowMethod::default())?;
            for (t, a) in ts.iter().zip(&tr.values) {
                let p = partial_semigroup_exact(&st, &x, *t)?;
                worst = worst.max((a - GnsVector(u.clone()).inner(&GnsVector(&p * &v))).norm());
            }
        }
        Ok(vec![Verdict::at_most("vacuum eta_t vs closed form", worst, 1e-8)])
    });
    (out, Vec::new())
}

/// `u` and `v` spread over sites `-1..=1` with fixed coefficients.
fn spread_vectors(params: AlgebraParams) -> (LocalOperator, LocalOperator) {
    let mut u = LocalOperator::identity(params);
    let mut v = LocalOperator::identity(params);
    for s in -1..=1i64 {
        for (a, b) in [(1u32, 0u32), (0, 1), (1, 1)] {
            u = &u + &op(params, &s1(s), a, b).scale_re(0.3 + 0.1 * (s + a as i64) as f64);
            let w = &op(params, &s1(s), a, b) * &op(params, &s1(s + 1), b, a);
            v = &v + &w.scale_re(0.2 - 0.05 * (s - b as i64) as f64);
        }
    }
    (u, v)
}

fn c08_homomorphism(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut out = Vec::new();
    let mut tables = Vec::new();
    let mut r = rng(seed, 8);
    let params = p2(1);
    guard(&mut out, "single-site eta", || {
        let st = random_state(&mut r);
        let l = Lindbladian::partial_state(params, st)?;
        let k = s1(0);
        let w = SiteWindow::from_sites([&k]);
        let ms = modes(std::slice::from_ref(&k), l.channels().len());
        let spec = ElementSpec::new(
            random_op(&mut r, params, std::slice::from_ref(&k), 3),
            test_function(&mut r, 2.0, 4, 4, &ms, 0.5),
            random_op(&mut r, params, std::slice::from_ref(&k), 3),
            test_function(&mut r, 2.0, 4, 4, &ms, 0.5),
        )?;
        let labels: Vec<LocalOperator> =
            [(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|(a, b)| op(params, &k, *a, *b)).collect();
        let sys = FlowGeneratorSystem::build(&l, &w, &labels)?;
        let ts = grid(2.0, 8);
        let mut worst = 0.0f64;
        for x in &labels {
            for y in &labels {
                worst = worst.max(homomorphism_defect(&sys, x, y, &spec, &ts)?.max_defect);
            }
        }
        Ok(vec![Verdict::at_most("single-site defect over 16 pairs", worst, 1e-8)])
    });
    guard(&mut out, "window sequence", || {
        let l = Lindbladian::translation_covariant(KrausFamily::single(
            &op(params, &s1(0), 1, 0) * &op(params, &s1(1), 0, 1),
        ));
        let (u, v) = spread_vectors(params);
        let ms = modes(&range_sites(-3, 3), 1);
        let spec = ElementSpec::new(
            u,
            test_function(&mut r, 1.0, 4, 4, &ms, 0.6),
            v,
            test_function(&mut r, 1.0, 4, 4, &ms, 0.6),
        )?;
        let (x, y) = (op(params, &s1(0), 0, 1), op(params, &s1(0), 1, 0));
        let ts = grid(1.0, 4);
        let mut t = Table::new(&["radius", "max_defect", "error_estimate", "pair_dim"]);
        let mut defects = Vec::new();
        let mut within = true;
        for radius in 1..=3 {
            let w = SiteWindow::cube(&s1(0), radius);
            let sys = FlowGeneratorSystem::build(&l, &w, &[x.clone(), y.clone()])?;
            let h = homomorphism_defect(&sys, &x, &y, &spec, &ts)?;
            within &= h.within_estimate();
            t.row(vec![
                radius.to_string(),
                num(h.max_defect),
                num(*h.error_estimate.last().unwrap()),
                h.pair_dim.to_string(),
            ]);
            defects.push(h.max_defect);
        }
        tables.push(("homomorphism_windows.csv".to_string(), t));
        let decreasing = defects.windows(2).all(|w| w[1] < w[0]);
        Ok(vec![
            Verdict::flag("defect strictly decreasing over radii 1, 2, 3", decreasing)
                .with_note(format!("{defects:?}")),
            Verdict::flag("defect within error estimate", within),
        ])
    });
    (out, tables)
}

fn c09_contraction(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut out = Vec::new();
    let mut r = rng(seed, 9);
    let params = p2(1);
    guard(&mut out, "contraction", || {
        let mut fails = 0usize;
        let mut worst_excess = f64::NEG_INFINITY;
        let mut most_negative = f64::INFINITY;
        for i in 0..50 {
            let l = if i % 2 == 0 {
                Lindbladian::partial_state(params, random_state(&mut r))?
            } else {
                random_single_r(&mut r, params)
            };
            let w = SiteWindow::cube(&s1(0), 1);
            let sites = w.sites().to_vec();
            let x = random_op(&mut r, params, &sites, 1 + i % 3);
            let ms = modes(&range_sites(-2, 2), l.channels().len());
            let family: Vec<FamilyMember> = (0..2 + i % 2)
                .map(|_| FamilyMember {
                    c: coeff(&mut r),
                    u: random_op(&mut r, params, &sites, 2),
                    f: test_function(&mut r, 1.0, 2, 2, &ms, 0.4),
                })
                .collect();
            let t = r.random_range(0.1..1.0);
            let sys = FlowGeneratorSystem::build(&l, &w, &[])?;
            let rep = contraction_check(&sys, &x, &family, t)?;
            if !rep.passes() {
                fails += 1;
            }
            worst_excess = worst_excess.max(rep.lhs - rep.rhs - rep.error);
            most_negative = most_negative.min(rep.lhs + rep.error);
        }
        Ok(vec![
            Verdict::at_most("failing instances", fails as f64, 0.0),
            Verdict::at_most("largest lhs - rhs - error", worst_excess, 0.0),
            Verdict::at_least("smallest lhs + error", most_negative, 0.0),
        ])
    });
    (out, Vec::new())
}

fn c10_covariance(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut out = Vec::new();
    let mut r = rng(seed, 10);
    let params = p2(1);
    let ts = grid(1.0, 4);
    guard(&mut out, "covariance", || {
        let mut fails = 0usize;
        let mut worst_ratio = 0.0f64;
        let mut vacuum = 0.0f64;
        for i in 0..20 {
            let l = if i % 4 == 0 {
                Lindbladian::partial_state(params, random_state(&mut r))?
            } else {
                random_single_r(&mut r, params)
            };
            let w = SiteWindow::cube(&s1(0), 1);
            let sites = w.sites().to_vec();
            let x = random_op(&mut r, params, &sites, 3);
            let (u, v) = anchored(&mut r, &x, &sites);
            let ms = modes(&range_sites(-2, 2), l.channels().len());
            let spec = ElementSpec::new(
                u.clone(),
                test_function(&mut r, 1.0, 2, 2, &ms, 0.5),
                v.clone(),
                test_function(&mut r, 1.0, 2, 2, &ms, 0.5),
            )?;
            let j = s1(*[-2i64, -1, 1, 2, 3].get(r.random_range(0..5)).unwrap());
            let rep = covariance_check(&l, &w, &x, &spec, &j, &ts)?;
            if !rep.within(2.0, 0.0) {
                fails += 1;
            }
            for (d, e) in rep.deviation.iter().zip(&rep.error_estimate) {
                if *e > 0.0 {
                    worst_ratio = worst_ratio.max(d / e);
                }
            }
            let vac = covariance_check(&l, &w, &x, &ElementSpec::vacuum(u, v, 1.0)?, &j, &ts)?;
            vacuum = vacuum.max(vac.max_deviation);
        }
        Ok(vec![
            Verdict::at_most("instances outside 2x estimate", fails as f64, 0.0),
            Verdict::at_most("largest deviation / estimate", worst_ratio, 2.0),
            Verdict::at_most("vacuum deviation", vacuum, 1e-9),
        ])
    });
    (out, Vec::new())
}

fn normalized(x: &LocalOperator) -> LocalOperator {
    x.scale_re(1.0 / uhf_core::dense::operator_norm(x))
}

fn c11_ergodicity(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut out = Vec::new();
    let mut tables = Vec::new();
    let mut r = rng(seed, 11);
    let params = p2(1);
    let ts = grid(15.0, 60);
    guard(&mut out, "ergodicity", || {
        let mut worst_rate = 0.0f64;
        let mut worst_final = 0.0f64;
        let mut t = Table::new(&["instance", "rate", "r2", "final_distance"]);
        for i in 0..6 {
            let st = random_state(&mut r);
            let l = Lindbladian::partial_state(params, st.clone())?;
            let k = s1(0);
            let x = normalized(&random_traceless(&mut r, params, std::slice::from_ref(&k), 3));
            let u = random_op(&mut r, params, std::slice::from_ref(&k), 2);
            let v = random_op(&mut r, params, std::slice::from_ref(&k), 2);
            let (u, v) = (u.scale_re(1.0 / GnsVector(u.clone()).norm()), v.scale_re(1.0 / GnsVector(v.clone()).norm()));
            let ms = modes(&range_sites(-1, 1), l.channels().len());
            let f = test_function(&mut r, 15.0, 60, 2, &ms, 0.5);
            let g = test_function(&mut r, 15.0, 60, 2, &ms, 0.5);
            let scan = eta_ergodicity_scan(params, &st, &x, &ElementSpec::new(u, f, v, g)?, &ts)?;
            let fin = *scan.distance.last().unwrap();
            worst_final = worst_final.max(fin);
            match &scan.fit {
                Ok(fit) => {
                    worst_rate = worst_rate.max((fit.rate - 1.0).abs());
                    t.row(vec![i.to_string(), num(fit.rate), num(fit.r2), num(fin)]);
                }
                Err(e) => return Err(uhf_core::Error::Fit(e.clone())),
            }
        }
        tables.push(("ergodicity_fits.csv".to_string(), t));
        Ok(vec![
            Verdict::at_most("|rate - 1|", worst_rate, 1e-2),
            Verdict::at_most("distance to target at t = 15", worst_final, 1e-6),
        ])
    });
    (out, tables)
}

fn c12_picard(seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut out = Vec::new();
    let mut r = rng(seed, 12);
    let params = p2(1);
    let mut t = Table::new(&["instance", "depth", "bound", "max_diff"]);
    guard(&mut out, "picard", || {
        let mut worst = 0.0f64;
        let mut worst_bound = 0.0f64;
        for i in 0..20 {
            let rop = commuting_r(&mut r, params, 2);
            let rop = rop.scale_re(0.2 / theta(&rop, 1));
            let l = Lindbladian::translation_covariant(KrausFamily::single(rop.clone()));
            let w = SiteWindow::cube(&s1(0), 2);
            let sites = w.sites().to_vec();
            let e = rop.labels().next().expect("nonzero r").entries()[0].1;
            let n = params.n() as i64;
            let ex = loop {
                let c = SiteExponent::new(r.random_range(0..params.n()), r.random_range(0..params.n()));
                if (e.alpha as i64 * c.beta as i64 - e.beta as i64 * c.alpha as i64).rem_euclid(n) != 0 {
                    break c;
                }
            };
            let x = LocalOperator::from_label(params, WeylLabel::single(s1(0), ex), coeff(&mut r));
            let t0 = 0.05;
            let ms = modes(&range_sites(-2, 2), 1);
            let f = test_function(&mut r, t0, 2, 2, &ms, 0.3);
            let g = test_function(&mut r, t0, 2, 2, &ms, 0.3);
            let (u, v) = anchored(&mut r, &x, &sites);
            let spec = ElementSpec::new(u, f.clone(), v, g)?;
            let sys = FlowGeneratorSystem::build(&l, &w, std::slice::from_ref(&x))?;
            let mut depth = 1;
            let mut bound = picard_error_bound(&l, &x, &f, t0, depth)?;
            while bound >= 1e-8 && depth < 200 {
                depth += 1;
                bound = picard_error_bound(&l, &x, &f, t0, depth)?;
            }
            let ts = [0.0, t0 / 2.0, t0];
            let p = flow_element(&sys, &x, &spec, &ts, FlowMethod::Picard(depth))?;
            let o = flow_element(&sys, &x, &spec, &ts, FlowMethod::default())?;
            let d = max(p.values.iter().zip(&o.values).map(|(a, b)| (a - b).norm()));
            worst = worst.max(d);
            worst_bound = worst_bound.max(bound);
            t.row(vec![i.to_string(), depth.to_string(), num(bound), num(d)]);
        }
        Ok(vec![
            Verdict::at_most("certified Picard bound", worst_bound, 1e-8),
            Verdict::at_most("Picard vs ODE", worst, 1e-7),
        ])
    });
    guard(&mut out, "ode runs", || {
        let mut worst = 0.0f64;
        for _ in 0..4 {
            let l = random_single_r(&mut r, params);
            let w = SiteWindow::cube(&s1(0), 1);
            let sites = w.sites().to_vec();
            let x = random_op(&mut r, params, &sites, 3);
            let ms = modes(&range_sites(-2, 2), 1);
            let (u, v) = anchored(&mut r, &x, &sites);
            let spec = ElementSpec::new(
                u,
                test_function(&mut r, 1.0, 4, 4, &ms, 0.5),
                v,
                test_function(&mut r, 1.0, 4, 4, &ms, 0.5),
            )?;
            let sys = FlowGeneratorSystem::build(&l, &w, std::slice::from_ref(&x))?;
            let ts = grid(1.0, 4);
            let a = flow_element(&sys, &x, &spec, &ts, FlowMethod::Ode(Some(OdeMethod::Rk4 { substeps: 64 })))?;
            let b = flow_element(&sys, &x, &spec, &ts, FlowMethod::Ode(Some(OdeMethod::Rk4 { substeps: 128 })))?;
            worst = worst.max(max(a.values.iter().zip(&b.values).map(|(p, q)| (p - q).norm())));
        }
        Ok(vec![Verdict::at_most("ODE runs with 64 and 128 substeps", worst, 1e-8)])
    });
    (out, vec![("picard.csv".to_string(), t)])
}

fn c13_witness(_seed: u64) -> (Vec<Verdict>, Vec<(String, Table)>) {
    let mut out = Vec::new();
    let mut t = Table::new(&["d", "K", "S_K"]);
    for d in 1..=2usize {
        let params = p2(d);
        let r = op(params, &Site::origin(d), 1, 0);
        guard(&mut out, &format!("witness d = {d}"), || {
            let s = hp_divergence_witness(&r, &LocalOperator::identity(params), 10)?;
            let mut worst = 0.0f64;
            for (k, v) in s.iter().enumerate() {
                let kk = k + 1;
                worst = worst.max((v - ((2 * kk + 1) as f64).powi(d as i32)).abs());
                t.row(vec![d.to_string(), kk.to_string(), num(*v)]);
            }
            Ok(vec![Verdict::at_most(format!("|S_K - (2K+1)^{d}|"), worst, 0.0)])
        });
    }
    (out, vec![("divergence_witness.csv".to_string(), t)])
}
