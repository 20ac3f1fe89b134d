use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use nalgebra::DVector;

use super::{partial_semigroup_exact, LindbladKind, Lindbladian};
use crate::dense::{operator_norm, ClosureMode, SiteWindow};
use crate::error::{Error, Result};
use crate::ode::{OdeMethod, PiecewiseSystem, SparseMatrix};
use crate::weyl::{theta, LocalOperator, WeylLabel};
use crate::C64;

/// Largest truncated basis built for ODE evolution.
pub const MAX_BASIS: usize = 20_000;

/// Treatment of generator terms near the window edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Truncation {
    /// Apply the full generator and book the mass leaving the window as error.
    #[default]
    Open,
    /// Keep only translates inside the window (a genuine Lindbladian).
    Interior,
    /// Keep translates meeting the window with outside factors removed.
    Clipped,
}

impl Truncation {
    pub fn closure_mode(self) -> ClosureMode {
        match self {
            Truncation::Clipped => ClosureMode::Clipped,
            _ => ClosureMode::Interior,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvolveMethod {
    /// Truncated exponential series with a rigorous tail bound.
    Series,
    /// Linear ODE on the coefficient vector over the reachable window basis.
    Ode,
    /// Product formula, partial-state generators only.
    ExactClosedForm,
    /// Dense matrix exponential on the window.
    Oracle,
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub method: EvolveMethod,
    pub tol: f64,
    pub window: Option<SiteWindow>,
    pub truncation: Truncation,
    pub max_terms: usize,
    pub ode: Option<OdeMethod>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            method: EvolveMethod::Ode,
            tol: 1e-12,
            window: None,
            truncation: Truncation::Open,
            max_terms: 400,
            ode: None,
        }
    }
}

impl EvolveOptions {
    pub fn with_method(method: EvolveMethod) -> Self {
        Self { method, ..Self::default() }
    }
}

/// `P_t(x)` on a time grid with a per-point error budget (sup-norm of
/// coefficients).
#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub grid: Vec<f64>,
    pub values: Vec<LocalOperator>,
    pub method: EvolveMethod,
    pub error_budget: Vec<f64>,
}

impl EvolutionResult {
    /// Columns `t, label, re, im, error_budget`, one row per nonzero term.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,label,re,im,error_budget")?;
        for ((t, x), e) in self.grid.iter().zip(&self.values).zip(&self.error_budget) {
            for (g, c) in x.terms() {
                writeln!(out, "{t:?},\"{g}\",{:?},{:?},{e:?}", c.re, c.im)?;
            }
        }
        Ok(())
    }
}

/// Evolves `x` under the semigroup generated by `l` and samples it on
/// `t_grid` (sorted, nonnegative).
pub fn evolve(l: &Lindbladian, x: &LocalOperator, t_grid: &[f64], opts: &EvolveOptions) -> Result<EvolutionResult> {
    if let Some(t) = t_grid.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!("evolution time must be >= 0, got {t}")));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("time grid must be sorted".into()));
    }
    l.params().check_same(&x.params())?;
    let window = match &opts.window {
        Some(w) => w.clone(),
        None => default_window(l, x, 3),
    };
    match opts.method {
        EvolveMethod::ExactClosedForm => {
            let state = match l.kind() {
                LindbladKind::PartialState { state } => state,
                _ => return Err(Error::Config("closed form exists only for partial-state generators".into())),
            };
            let values = t_grid.iter().map(|t| partial_semigroup_exact(state, x, *t)).collect::<Result<Vec<_>>>()?;
            Ok(EvolutionResult {
                grid: t_grid.to_vec(),
                values,
                method: opts.method,
                error_budget: vec![0.0; t_grid.len()],
            })
        }
        EvolveMethod::Oracle => {
            let s = l.superoperator(&window, opts.truncation.closure_mode())?;
            let values = t_grid.iter().map(|t| s.expm_evolve(*t, x)).collect::<Result<Vec<_>>>()?;
            Ok(EvolutionResult {
                grid: t_grid.to_vec(),
                values,
                method: opts.method,
                error_budget: vec![1e-12; t_grid.len()],
            })
        }
        EvolveMethod::Series => evolve_series(l, x, t_grid, &window, opts),
        EvolveMethod::Ode => evolve_ode(l, x, t_grid, &window, opts),
    }
}

/// `supp(x)` widened by `depth` times the Kraus diameter.
pub(crate) fn default_window(l: &Lindbladian, x: &LocalOperator, depth: i64) -> SiteWindow {
    let pad = (2 * l.kraus_radius()).max(1) * depth;
    SiteWindow::padded_box(&x.support(), l.params().d(), pad)
}

fn check_inside(x: &LocalOperator, window: &SiteWindow) -> Result<()> {
    let support = x.support();
    if support.iter().all(|s| window.contains(s)) {
        return Ok(());
    }
    Err(Error::Window { support: format!("{:?}", support), window: window.to_string() })
}

/// One-step bound `||L z||_c <= beta(S) ||z||_c` for `|supp z| <= S`, where
/// `||.||_c` is the coefficient l1 norm.
fn step_bound(l: &Lindbladian, support_size: usize) -> f64 {
    let mut beta = 0.0;
    for i in 0..l.num_components() {
        let w = l.component_weight(i);
        for a in l.family(i).ops() {
            let na = a.coeff_l1();
            beta += w * 2.0 * na * na * (support_size * a.support_size()) as f64;
        }
    }
    beta
}

fn support_growth(l: &Lindbladian) -> usize {
    (0..l.num_components())
        .filter(|i| l.component_weight(*i) != 0.0)
        .flat_map(|i| l.family(i).ops().iter().map(|a| a.support_size().saturating_sub(1)))
        .max()
        .unwrap_or(0)
}

/// Natural logs of bounds on `||L^m x||` for `m = 0..=m_max`: the smaller of
/// the generic support-counting estimate and, for a single commuting `r`, the
/// majorant `(2 (1 + ||r||)^2 2 theta_1(r) c_x)^m`.
fn log_power_bounds(l: &Lindbladian, x: &LocalOperator, m_max: usize, cap: Option<usize>) -> Vec<f64> {
    let growth = support_growth(l);
    let s0 = x.support_size();
    let lemma_k = l.single_r().filter(|r| super::commuting_family(r)).map(|r| {
        let nr = operator_norm(r);
        (2.0 * (1.0 + nr).powi(2) * 2.0 * theta(r, 1) * crate::weyl::c_const(x)).ln()
    });
    let mut out = Vec::with_capacity(m_max + 1);
    let mut generic = x.coeff_l1().ln();
    for m in 0..=m_max {
        let b = match lemma_k {
            Some(k) if m > 0 => generic.min(k * m as f64),
            _ => generic,
        };
        out.push(b);
        let mut s = s0 + m * growth;
        if let Some(c) = cap {
            s = s.min(c);
        }
        generic += step_bound(l, s).ln();
    }
    out
}

/// `sum_{m > n} t^m / m! * B_m` from log bounds.
fn tail(log_bounds: &[f64], n: usize, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let mut log_factor = 0.0;
    let mut acc = 0.0;
    for (m, b) in log_bounds.iter().enumerate() {
        if m > 0 {
            log_factor += (t / m as f64).ln();
        }
        if m > n {
            acc += (log_factor + b).exp();
        }
    }
    acc
}

fn evolve_series(
    l: &Lindbladian,
    x: &LocalOperator,
    t_grid: &[f64],
    window: &SiteWindow,
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    check_inside(x, window)?;
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    let cap = match opts.truncation {
        Truncation::Open => None,
        _ => Some(window.len()),
    };
    // bounds beyond max_terms are only used for the tail estimate
    let horizon = opts.max_terms + 200;
    let bounds = log_power_bounds(l, x, horizon, cap);
    let mut n = 0;
    while tail(&bounds, n, t_max) >= opts.tol {
        n += 1;
        if n >= opts.max_terms {
            return Err(Error::Convergence { tol: opts.tol, terms: n, tail: tail(&bounds, n, t_max) });
        }
    }
    let growth = support_growth(l);
    let mut powers = vec![x.clone()];
    let mut prop_err = vec![0.0];
    for m in 1..=n {
        let (next, leak) = l.apply_truncated(&powers[m - 1], Some(window), opts.truncation);
        let mut s = x.support_size() + m * growth;
        if let Some(c) = cap {
            s = s.min(c);
        }
        let e = leak + step_bound(l, s) * prop_err[m - 1];
        powers.push(next);
        prop_err.push(e);
    }
    let mut values = Vec::with_capacity(t_grid.len());
    let mut budget = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut acc = LocalOperator::zero(l.params());
        let mut factor = 1.0;
        let mut err = 0.0;
        for (m, p) in powers.iter().enumerate() {
            if m > 0 {
                factor *= t / m as f64;
            }
            acc = &acc + &p.scale_re(factor);
            err += factor * prop_err[m];
        }
        values.push(acc);
        budget.push(err + tail(&bounds, n, t) + 1e-15 * n as f64);
    }
    monotone(&mut budget);
    Ok(EvolutionResult { grid: t_grid.to_vec(), values, method: EvolveMethod::Series, error_budget: budget })
}

fn monotone(v: &mut [f64]) {
    for i in 1..v.len() {
        if v[i] < v[i - 1] {
            v[i] = v[i - 1];
        }
    }
}

/// Generator restricted to the labels reachable from a seed set.
#[derive(Clone, Debug)]
pub(crate) struct ClosureSystem {
    pub basis: Vec<WeylLabel>,
    pub index: HashMap<WeylLabel, usize>,
    pub matrix: SparseMatrix,
    pub leak: Vec<f64>,
}

impl ClosureSystem {
    pub fn vectorize(&self, x: &LocalOperator) -> DVector<C64> {
        let mut v = DVector::zeros(self.basis.len());
        for (g, c) in x.terms() {
            v[self.index[g]] = *c;
        }
        v
    }

    pub fn devectorize(&self, params: crate::weyl::AlgebraParams, v: &DVector<C64>) -> LocalOperator {
        LocalOperator::from_terms(params, self.basis.iter().cloned().zip(v.iter().cloned()))
    }
}

pub(crate) fn closure_system(
    l: &Lindbladian,
    seeds: &LocalOperator,
    window: &SiteWindow,
    truncation: Truncation,
) -> Result<ClosureSystem> {
    check_inside(seeds, window)?;
    let params = l.params();
    let mut basis: Vec<WeylLabel> = Vec::new();
    let mut index: HashMap<WeylLabel, usize> = HashMap::new();
    let mut queue: std::collections::VecDeque<WeylLabel> = std::collections::VecDeque::new();
    let mut seen: BTreeSet<WeylLabel> = BTreeSet::new();
    for g in seeds.labels() {
        if seen.insert(g.clone()) {
            queue.push_back(g.clone());
        }
    }
    let mut images: Vec<(LocalOperator, f64)> = Vec::new();
    while let Some(g) = queue.pop_front() {
        if basis.len() >= MAX_BASIS {
            return Err(Error::Size(format!("reachable basis exceeds {MAX_BASIS} labels")));
        }
        index.insert(g.clone(), basis.len());
        basis.push(g.clone());
        let (img, leak) =
            l.apply_truncated(&LocalOperator::from_label(params, g, C64::new(1.0, 0.0)), Some(window), truncation);
        for h in img.labels() {
            if seen.insert(h.clone()) {
                queue.push_back(h.clone());
            }
        }
        images.push((img, leak));
    }
    let cols = images.iter().map(|(img, _)| img.terms().map(|(h, c)| (index[h], *c)).collect()).collect();
    Ok(ClosureSystem {
        matrix: SparseMatrix::from_columns(basis.len(), cols),
        leak: images.iter().map(|(_, l)| *l).collect(),
        basis,
        index,
    })
}

/// Number of quadrature intervals used for leakage integrals.
const LEAK_QUAD: usize = 256;

fn evolve_ode(
    l: &Lindbladian,
    x: &LocalOperator,
    t_grid: &[f64],
    window: &SiteWindow,
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    let sys = closure_system(l, x, window, opts.truncation)?;
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    let method = opts.ode.unwrap_or_else(|| OdeMethod::auto(sys.basis.len()));
    let v0 = sys.vectorize(x);
    if t_max == 0.0 {
        return Ok(EvolutionResult {
            grid: t_grid.to_vec(),
            values: vec![x.clone(); t_grid.len()],
            method: EvolveMethod::Ode,
            error_budget: vec![0.0; t_grid.len()],
        });
    }
    let leaky = sys.leak.iter().any(|v| *v > 0.0);
    let mut times: Vec<f64> = t_grid.to_vec();
    if leaky {
        times.extend((0..=LEAK_QUAD).map(|i| t_max * i as f64 / LEAK_QUAD as f64));
        times.sort_by(f64::total_cmp);
        times.dedup();
    }
    let ode = PiecewiseSystem::constant(sys.matrix.clone(), t_max)?;
    let sol = ode.solve(&v0, &times, method)?;
    // cumulative bound on int_0^t sum_b |c_b(s)| leak_b ds (trapezoid)
    let rate: Vec<f64> = sol.iter().map(|v| v.iter().zip(&sys.leak).map(|(c, lk)| c.norm() * lk).sum()).collect();
    let mut cumulative = vec![0.0; times.len()];
    for i in 1..times.len() {
        cumulative[i] = cumulative[i - 1] + 0.5 * (rate[i] + rate[i - 1]) * (times[i] - times[i - 1]);
    }
    let tol = method.nominal_tolerance();
    let mut values = Vec::with_capacity(t_grid.len());
    let mut budget = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let i = times.partition_point(|s| *s < t);
        let v = &sol[i];
        values.push(sys.devectorize(l.params(), v));
        let scale = v.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        budget.push(cumulative[i] + tol * scale * (1.0 + t));
    }
    monotone(&mut budget);
    Ok(EvolutionResult { grid: t_grid.to_vec(), values, method: EvolveMethod::Ode, error_budget: budget })
}
