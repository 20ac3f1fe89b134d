//! The subcommands. Each writes its tables as it goes, so a later engine
//! error still leaves the earlier results on disk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uhf_core::dense::{operator_norm, SiteWindow};
use uhf_core::fock::{
    contraction_check, covariance_check, flow_element, homomorphism_defect, picard_error_bound, ElementSpec,
    FamilyMember, FlowGeneratorSystem, FlowMethod, TestFunction,
};
use uhf_core::lindblad::{
    decay_rate_fit, ergodic_state, evolve, leibniz_expansion_check, lemma_bound_report, perturbed_ergodic_state,
    BoundMode, EvolveMethod, EvolveOptions, LindbladKind, QuadSpec, Truncation,
};
use uhf_core::weyl::{GnsVector, LocalOperator, Site};
use uhf_core::C64;

use crate::config::{EvolveMethodName, Experiment, FlowMethodName, TruncationName};
use crate::report::{num, OutputDir, RunReport, Table, Verdict};
use crate::suites;
use crate::CliError;

fn need_xs(exp: &Experiment) -> Result<(), CliError> {
    if exp.xs.is_empty() {
        return Err(CliError::Config("observables.x: at least one observable is required".into()));
    }
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(buf)
}

fn evolve_method(m: EvolveMethodName) -> EvolveMethod {
    match m {
        EvolveMethodName::Series => EvolveMethod::Series,
        EvolveMethodName::Ode => EvolveMethod::Ode,
        EvolveMethodName::Exact => EvolveMethod::ExactClosedForm,
        EvolveMethodName::Oracle => EvolveMethod::Oracle,
    }
}

fn truncation(t: TruncationName) -> Truncation {
    match t {
        TruncationName::Open => Truncation::Open,
        TruncationName::Interior => Truncation::Interior,
        TruncationName::Clipped => Truncation::Clipped,
    }
}

/// The configured window, or the supports of `ops` padded by the Kraus radius.
fn window_or_padded(exp: &Experiment, ops: &[&LocalOperator]) -> Result<SiteWindow, CliError> {
    if let Some(w) = &exp.window {
        return Ok(w.clone());
    }
    let mut support = std::collections::BTreeSet::new();
    for x in ops {
        support.extend(x.support());
    }
    if support.is_empty() {
        support.insert(Site::origin(exp.params.d()));
    }
    Ok(SiteWindow::padded_box(&support, exp.params.d(), exp.generator()?.kraus_radius()))
}

pub fn cmd_evolve(exp: &Experiment, dir: &OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let l = exp.generator()?;
    need_xs(exp)?;
    let sec = &exp.config.evolve;
    let tol = &exp.config.tolerances;
    let opts = EvolveOptions {
        window: exp.window.clone(),
        truncation: truncation(sec.truncation),
        ..EvolveOptions::with_method(evolve_method(sec.method))
    };
    for (i, x) in exp.xs.iter().enumerate() {
        let res = evolve(l, x, &exp.grid, &opts).map_err(CliError::engine("evolve"))?;
        dir.write_result(report, &format!("evolve_x{i}.csv"), &csv_bytes(|b| res.write_csv(b))?)?;
        report.push(Verdict::at_most(
            format!("x{i}: error budget"),
            res.error_budget.iter().cloned().fold(0.0, f64::max),
            tol.oracle,
        ));
        if sec.cross_check {
            let w = window_or_padded(exp, &[x])?;
            let interior = |m: EvolveMethod| EvolveOptions {
                window: Some(w.clone()),
                truncation: Truncation::Interior,
                ..EvolveOptions::with_method(m)
            };
            let a = evolve(l, x, &exp.grid, &interior(evolve_method(sec.method)))
                .map_err(CliError::engine("cross check"))?;
            let b =
                evolve(l, x, &exp.grid, &interior(EvolveMethod::Oracle)).map_err(CliError::engine("dense oracle"))?;
            let diff = a.values.iter().zip(&b.values).map(|(p, q)| p.max_coeff_diff(q)).fold(0.0, f64::max);
            report.push(Verdict::at_most(format!("x{i}: interior window vs dense oracle"), diff, tol.oracle));
            let clipped = EvolveOptions { truncation: Truncation::Clipped, ..interior(evolve_method(sec.method)) };
            let c = evolve(l, x, &exp.grid, &clipped).map_err(CliError::engine("clipped window"))?;
            let mut t = Table::new(&["t", "interior_vs_clipped"]);
            for ((time, p), q) in exp.grid.iter().zip(&a.values).zip(&c.values) {
                t.row(vec![num(*time), num(p.max_coeff_diff(q))]);
            }
            dir.write_result(report, &format!("truncation_x{i}.csv"), &t.to_csv())?;
        }
    }
    let one = LocalOperator::identity(exp.params);
    let res = evolve(l, &one, &exp.grid, &opts).map_err(CliError::engine("unitality"))?;
    let drift = res.values.iter().map(|v| v.max_coeff_diff(&one)).fold(0.0, f64::max);
    report.push(Verdict::at_most("P_t(1) = 1", drift, tol.unitality));
    Ok(())
}

pub fn cmd_ergodicity(exp: &Experiment, dir: &OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let l = exp.generator()?;
    need_xs(exp)?;
    let sec = &exp.config.ergodicity;
    let tol = &exp.config.tolerances;
    match l.kind() {
        LindbladKind::PartialState { state, .. } => {
            let expected = sec.expected_rate.unwrap_or(1.0);
            let mut t = Table::new(&["x", "t", "distance"]);
            for (i, x) in exp.xs.iter().enumerate() {
                let phi = LocalOperator::scalar(
                    exp.params,
                    ergodic_state(state, x).map_err(CliError::engine("ergodic state"))?,
                );
                let res = evolve(l, x, &exp.grid, &EvolveOptions::with_method(EvolveMethod::Ode))
                    .map_err(CliError::engine("evolve"))?;
                let dist: Vec<f64> = res.values.iter().map(|v| operator_norm(&(v - &phi))).collect();
                for (a, b) in exp.grid.iter().zip(&dist) {
                    t.row(vec![i.to_string(), num(*a), num(*b)]);
                }
                match decay_rate_fit(&exp.grid, &dist) {
                    Ok(fit) => report.push(
                        Verdict::at_most(format!("x{i}: |rate - {expected}|"), (fit.rate - expected).abs(), tol.rate)
                            .with_note(format!("rate {} r2 {}", fit.rate, fit.r2)),
                    ),
                    Err(e) => report.push(Verdict::flag(format!("x{i}: decay fit"), false).with_note(e.to_string())),
                }
            }
            dir.write_result(report, "ergodicity.csv", &t.to_csv())?;
        }
        LindbladKind::Perturbed { state, .. } => {
            let quad = QuadSpec { panels: sec.quad_panels, tol: sec.quad_tol, ..QuadSpec::default() };
            let mut t = Table::new(&["x", "re", "im", "error", "t_cut", "rate", "phi_re", "phi_im"]);
            for (i, x) in exp.xs.iter().enumerate() {
                let pv = perturbed_ergodic_state(l, x, &quad).map_err(CliError::engine("perturbed ergodic state"))?;
                let phi = ergodic_state(state, x).map_err(CliError::engine("ergodic state"))?;
                t.row(vec![
                    i.to_string(),
                    num(pv.value.re),
                    num(pv.value.im),
                    num(pv.error),
                    num(pv.t_cut),
                    num(pv.rate),
                    num(phi.re),
                    num(phi.im),
                ]);
                report.push(Verdict::at_most(
                    format!("x{i}: quadrature error"),
                    pv.error,
                    (100.0 * sec.quad_tol).max(1e-8),
                ));
                if let Some(expected) = sec.expected_rate {
                    report.push(Verdict::at_most(
                        format!("x{i}: |rate - {expected}|"),
                        (pv.rate - expected).abs(),
                        tol.rate,
                    ));
                }
            }
            dir.write_result(report, "perturbed_state.csv", &t.to_csv())?;
        }
        LindbladKind::TranslationCovariant => {
            return Err(CliError::Config("generator.kind: ergodicity needs partial_state or perturbed".into()));
        }
    }
    Ok(())
}

fn test_function_or_zero(f: &Option<TestFunction>, t_max: f64) -> Result<TestFunction, CliError> {
    match f {
        Some(f) => Ok(f.clone()),
        None => TestFunction::zero(t_max, 1).map_err(CliError::engine("test function")),
    }
}

pub fn cmd_flow(exp: &Experiment, dir: &OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let l = exp.generator()?;
    need_xs(exp)?;
    let sec = &exp.config.flow;
    let tol = &exp.config.tolerances;
    let grid_end = exp.grid.last().cloned().unwrap_or(0.0);
    let t_max = exp.f.as_ref().or(exp.g.as_ref()).map(|f| f.t_max()).unwrap_or(grid_end.max(1.0));
    let f = test_function_or_zero(&exp.f, t_max)?;
    let g = test_function_or_zero(&exp.g, t_max)?;
    let mut ops: Vec<&LocalOperator> = exp.xs.iter().chain(&exp.ys).collect();
    ops.push(&exp.u);
    ops.push(&exp.v);
    let window = window_or_padded(exp, &ops)?;
    let seeds: Vec<LocalOperator> = exp.xs.iter().chain(&exp.ys).cloned().collect();
    let sys = FlowGeneratorSystem::build(l, &window, &seeds).map_err(CliError::engine("flow system"))?;
    let spec =
        ElementSpec::new(exp.u.clone(), f.clone(), exp.v.clone(), g.clone()).map_err(CliError::engine("element"))?;
    let vacuum = f.is_zero() && g.is_zero();

    for (i, x) in exp.xs.iter().enumerate() {
        let method = match sec.method {
            FlowMethodName::Ode => FlowMethod::default(),
            FlowMethodName::Picard => {
                let depth = match sec.picard_depth {
                    Some(n) => n,
                    None => certified_depth(l, x, &f, grid_end)?,
                };
                FlowMethod::Picard(depth)
            }
        };
        let tr = flow_element(&sys, x, &spec, &exp.grid, method).map_err(CliError::engine("flow"))?;
        dir.write_result(report, &format!("flow_x{i}.csv"), &csv_bytes(|b| tr.write_csv(&format!("x{i}"), b))?)?;
        if vacuum {
            let opts = EvolveOptions {
                window: Some(window.clone()),
                truncation: Truncation::Open,
                ..EvolveOptions::with_method(EvolveMethod::Ode)
            };
            let ev = evolve(l, x, &exp.grid, &opts).map_err(CliError::engine("vacuum reduction"))?;
            let diff = tr
                .values
                .iter()
                .zip(&ev.values)
                .map(|(a, p)| (a - GnsVector(exp.u.clone()).inner(&GnsVector(p * &exp.v))).norm())
                .fold(0.0, f64::max);
            report.push(Verdict::at_most(format!("x{i}: vacuum flow vs semigroup"), diff, tol.vacuum));
        }
        if let Some(shift) = &sec.covariance_shift {
            if shift.len() != exp.params.d() {
                return Err(CliError::Config(format!(
                    "flow.covariance_shift: expected {} coordinates",
                    exp.params.d()
                )));
            }
            let rep = covariance_check(l, &window, x, &spec, &Site::new(shift), &exp.grid)
                .map_err(CliError::engine("covariance"))?;
            report.push(
                Verdict::flag(format!("x{i}: covariance within 2x estimate"), rep.within(2.0, 0.0))
                    .with_note(format!("max deviation {:e}", rep.max_deviation)),
            );
        }
        if sec.contraction && grid_end > 0.0 {
            let family = [FamilyMember { c: C64::new(1.0, 0.0), u: exp.u.clone(), f: f.clone() }];
            let rep = contraction_check(&sys, x, &family, grid_end).map_err(CliError::engine("contraction"))?;
            report.push(
                Verdict::flag(format!("x{i}: contraction"), rep.passes())
                    .with_note(format!("lhs {:e} rhs {:e} error {:e}", rep.lhs, rep.rhs, rep.error)),
            );
        }
        for (j, y) in exp.ys.iter().enumerate() {
            let h = homomorphism_defect(&sys, x, y, &spec, &exp.grid).map_err(CliError::engine("homomorphism"))?;
            let mut t = Table::new(&["t", "defect", "error_estimate"]);
            for ((a, b), c) in h.grid.iter().zip(&h.defect).zip(&h.error_estimate) {
                t.row(vec![num(*a), num(*b), num(*c)]);
            }
            dir.write_result(report, &format!("homomorphism_x{i}_y{j}.csv"), &t.to_csv())?;
            report.push(
                Verdict::flag(format!("x{i} y{j}: homomorphism defect within estimate"), h.within_estimate())
                    .with_note(format!("max defect {:e}", h.max_defect)),
            );
        }
    }
    let one = LocalOperator::identity(exp.params);
    let tr =
        flow_element(&sys, &one, &spec, &exp.grid, FlowMethod::default()).map_err(CliError::engine("unitality"))?;
    let scale = tr.values[0].norm().max(1.0);
    let drift = tr.values.iter().map(|v| (v - tr.values[0]).norm() / scale).fold(0.0, f64::max);
    report.push(Verdict::at_most("F_t(1) constant", drift, tol.unitality));
    Ok(())
}

/// Smallest Picard depth whose certified bound is below `1e-8`.
fn certified_depth(
    l: &uhf_core::lindblad::Lindbladian,
    x: &LocalOperator,
    f: &TestFunction,
    t0: f64,
) -> Result<usize, CliError> {
    for n in 1..=200 {
        if picard_error_bound(l, x, f, t0, n).map_err(CliError::engine("picard bound"))? < 1e-8 {
            return Ok(n);
        }
    }
    Err(CliError::Engine { check: "picard bound".into(), msg: "no depth up to 200 certifies 1e-8".into() })
}

pub fn cmd_lemma(exp: &Experiment, dir: &OutputDir, report: &mut RunReport) -> Result<(), CliError> {
    let l = exp.generator()?;
    need_xs(exp)?;
    let sec = &exp.config.lemma;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    let d = exp.params.d();
    let mut t = Table::new(&["x", "order", "mode", "signs", "lhs", "rhs"]);
    let mut expansion = 0.0f64;
    let mut violations = 0usize;
    for (i, x) in exp.xs.iter().enumerate() {
        for &n in &sec.orders {
            for _ in 0..sec.instances {
                let kbar: Vec<Site> =
                    (0..n).map(|_| Site::new(&(0..d).map(|_| rng.random_range(-1..=1)).collect::<Vec<_>>())).collect();
                expansion = expansion.max(leibniz_expansion_check(l, x, &kbar).map_err(CliError::engine("expansion"))?);
                let pure: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
                let mixed: Vec<i8> = (0..n).map(|_| rng.random_range(-1..=1)).collect();
                for (name, mode) in
                    [("pure", BoundMode::Pure(pure.clone())), ("mixed", BoundMode::Mixed(mixed.clone()))]
                {
                    let rep = lemma_bound_report(l, x, &mode).map_err(CliError::engine("bound"))?;
                    if !rep.holds() {
                        violations += 1;
                    }
                    let signs = match &mode {
                        BoundMode::Pure(e) | BoundMode::Mixed(e) => format!("{e:?}"),
                        BoundMode::Product { .. } => String::new(),
                    };
                    t.row(vec![i.to_string(), n.to_string(), name.into(), signs, num(rep.lhs), num(rep.rhs)]);
                }
            }
        }
    }
    dir.write_result(report, "lemma.csv", &t.to_csv())?;
    report.push(Verdict::at_most("expansion identity", expansion, 1e-12));
    report.push(Verdict::at_most("bound violations", violations as f64, 0.0));
    Ok(())
}

/// Every acceptance criterion, one summary row each plus their tables.
pub fn cmd_selftest(dir: &OutputDir, report: &mut RunReport, seed: u64) -> Result<(), CliError> {
    let outcomes = suites::run_all(seed);
    let mut t = Table::new(&["criterion", "title", "pass", "seconds"]);
    for o in &outcomes {
        println!("{}", o.summary_line());
        t.row(vec![o.id.to_string(), o.title.into(), o.pass().to_string(), format!("{:.3}", o.seconds)]);
        for v in &o.verdicts {
            let mut v = v.clone();
            v.name = format!("criterion {}: {}", o.id, v.name);
            report.push(v);
        }
        for (name, table) in &o.tables {
            dir.write_result(report, &format!("c{:02}_{name}", o.id), &table.to_csv())?;
        }
    }
    dir.write_result(report, "criteria.csv", &t.to_csv())
}
