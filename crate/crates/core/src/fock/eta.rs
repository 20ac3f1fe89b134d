use std::collections::BTreeSet;

use super::system::{check_grid, flow_element, ElementSpec, FlowGeneratorSystem, FlowMethod, MatrixElementTrajectory};
use super::testfn::exp_inner;
use crate::dense::{SiteWindow, StateSpec};
use crate::error::{Error, Result};
use crate::lindblad::{decay_rate_fit, ergodic_state, DecayFit, Lindbladian};
use crate::weyl::{AlgebraParams, GnsVector, LocalOperator, Site};
use crate::C64;

/// Values below this fraction of the series maximum are excluded from
/// ergodicity fits.
pub const FIT_FLOOR: f64 = 1e-12;

fn window_for(x: &LocalOperator, extra: &[&Site]) -> SiteWindow {
    let mut sites: BTreeSet<Site> = x.support();
    sites.extend(extra.iter().map(|s| (*s).clone()));
    if sites.is_empty() {
        sites.insert(Site::origin(x.params().d()));
    }
    SiteWindow::from_sites(&sites)
}

/// `eta_t^(k)` matrix elements: the partial-state flow on the single site
/// `k`, one noise mode per state Kraus member.
pub fn eta_site_flow(
    params: AlgebraParams,
    phi: &StateSpec,
    k: &Site,
    x: &LocalOperator,
    spec: &ElementSpec,
    t_grid: &[f64],
) -> Result<MatrixElementTrajectory> {
    if let Some(s) = x.support().into_iter().find(|s| s != k) {
        return Err(Error::Window { support: format!("{s}"), window: format!("{{{k}}}") });
    }
    let l = Lindbladian::partial_state(params, phi.clone())?;
    let window = SiteWindow::from_sites([k]);
    let sys = FlowGeneratorSystem::build(&l, &window, std::slice::from_ref(x))?;
    flow_element(&sys, x, spec, t_grid, FlowMethod::default())
}

/// `eta_t^(Lambda)` matrix elements, solved on the window `lambda`.
pub fn eta_product_flow(
    params: AlgebraParams,
    phi: &StateSpec,
    lambda: &SiteWindow,
    x: &LocalOperator,
    spec: &ElementSpec,
    t_grid: &[f64],
) -> Result<MatrixElementTrajectory> {
    let l = Lindbladian::partial_state(params, phi.clone())?;
    let sys = FlowGeneratorSystem::build(&l, lambda, std::slice::from_ref(x))?;
    flow_element(&sys, x, spec, t_grid, FlowMethod::default())
}

/// Per-site data `(k, x_k, u_k, v_k)` of a product matrix element.
#[derive(Clone, Debug)]
pub struct SiteFactor {
    pub site: Site,
    pub x: LocalOperator,
    pub u: LocalOperator,
    pub v: LocalOperator,
}

/// `prod_k <u_k e(f_k), eta_t^(k)(x_k) v_k e(g_k)> * exp(<f, g>)` over the
/// modes not attached to any factor site, where `f_k` keeps the modes at `k`.
pub fn eta_product_factorized(
    params: AlgebraParams,
    phi: &StateSpec,
    factors: &[SiteFactor],
    f: &super::TestFunction,
    g: &super::TestFunction,
    t_grid: &[f64],
) -> Result<Vec<C64>> {
    let sites: BTreeSet<Site> = factors.iter().map(|s| s.site.clone()).collect();
    if sites.len() != factors.len() {
        return Err(Error::Config("factor sites must be distinct".into()));
    }
    check_grid(t_grid, f.t_max())?;
    let rest = exp_inner(&f.restrict(|m| !sites.contains(&m.site)), &g.restrict(|m| !sites.contains(&m.site)))?;
    let mut out = vec![rest; t_grid.len()];
    for fac in factors {
        for op in [&fac.x, &fac.u, &fac.v] {
            if let Some(s) = op.support().into_iter().find(|s| *s != fac.site) {
                return Err(Error::Window { support: format!("{s}"), window: format!("{{{}}}", fac.site) });
            }
        }
        let at = |m: &super::Mode| m.site == fac.site;
        let spec = ElementSpec::new(fac.u.clone(), f.restrict(at), fac.v.clone(), g.restrict(at))?;
        let tr = eta_site_flow(params, phi, &fac.site, &fac.x, &spec, t_grid)?;
        for (o, v) in out.iter_mut().zip(&tr.values) {
            *o *= v;
        }
    }
    Ok(out)
}

/// Distance of `eta_t(x)` matrix elements from their ergodic limit.
#[derive(Clone, Debug)]
pub struct ErgodicityScan {
    pub grid: Vec<f64>,
    pub values: Vec<C64>,
    /// `|F_t(x) - target|`.
    pub distance: Vec<f64>,
    /// `Phi(x) <u e(f), v e(g)>`.
    pub target: C64,
    pub error_estimate: Vec<f64>,
    /// Decay fit over grid points past the test-function support.
    pub fit: std::result::Result<DecayFit, String>,
}

pub fn eta_ergodicity_scan(
    params: AlgebraParams,
    phi: &StateSpec,
    x: &LocalOperator,
    spec: &ElementSpec,
    t_grid: &[f64],
) -> Result<ErgodicityScan> {
    let l = Lindbladian::partial_state(params, phi.clone())?;
    let window = window_for(x, &[]);
    let sys = FlowGeneratorSystem::build(&l, &window, std::slice::from_ref(x))?;
    let tr = flow_element(&sys, x, spec, t_grid, FlowMethod::default())?;
    let target = ergodic_state(phi, x)? * spec.initial(&LocalOperator::identity(params))?;
    let distance: Vec<f64> = tr.values.iter().map(|v| (v - target).norm()).collect();
    let start = spec.f.support_end().max(spec.g.support_end());
    let peak = distance.iter().cloned().fold(0.0, f64::max);
    let (ts, vs): (Vec<f64>, Vec<f64>) = t_grid
        .iter()
        .zip(&distance)
        .filter(|(t, d)| **t >= start && **d > FIT_FLOOR * peak)
        .map(|(t, d)| (*t, *d))
        .unzip();
    let fit = decay_rate_fit(&ts, &vs).map_err(|e| e.to_string());
    Ok(ErgodicityScan {
        grid: t_grid.to_vec(),
        values: tr.values,
        distance,
        target,
        error_estimate: tr.error_estimate,
        fit,
    })
}

/// Shift invariance of matrix elements under a lattice translation by `j`.
#[derive(Clone, Debug)]
pub struct CovarianceReport {
    pub deviation: Vec<f64>,
    pub max_deviation: f64,
    /// Sum of both solves' error estimates.
    pub error_estimate: Vec<f64>,
}

impl CovarianceReport {
    pub fn within(&self, factor: f64, floor: f64) -> bool {
        self.deviation.iter().zip(&self.error_estimate).all(|(d, e)| *d <= factor * e + floor)
    }
}

/// Compares `F_t(x; u, f, v, g)` on `window` with
/// `F_t(tau_-j x; tau_-j u, f o shift_j, tau_-j v, g o shift_j)` on the
/// translated window, each solved independently.
pub fn covariance_check(
    l: &Lindbladian,
    window: &SiteWindow,
    x: &LocalOperator,
    spec: &ElementSpec,
    j: &Site,
    t_grid: &[f64],
) -> Result<CovarianceReport> {
    let neg = j.neg();
    let a = FlowGeneratorSystem::build(l, window, std::slice::from_ref(x))?;
    let ta = flow_element(&a, x, spec, t_grid, FlowMethod::default())?;
    let xs = x.translate(&neg);
    let shifted = ElementSpec::new(spec.u.translate(&neg), spec.f.shift(j), spec.v.translate(&neg), spec.g.shift(j))?;
    let b = FlowGeneratorSystem::build(l, &window.translate(&neg), std::slice::from_ref(&xs))?;
    let tb = flow_element(&b, &xs, &shifted, t_grid, FlowMethod::default())?;
    let deviation: Vec<f64> = ta.values.iter().zip(&tb.values).map(|(p, q)| (p - q).norm()).collect();
    Ok(CovarianceReport {
        max_deviation: deviation.iter().cloned().fold(0.0, f64::max),
        deviation,
        error_estimate: ta.error_estimate.iter().zip(&tb.error_estimate).map(|(p, q)| p + q).collect(),
    })
}

/// `<u, P_t(x) v>` read off a vacuum flow, for callers comparing against
/// semigroup output.
pub fn vacuum_inner(u: &LocalOperator, ptx: &LocalOperator, v: &LocalOperator) -> C64 {
    GnsVector(u.clone()).inner(&GnsVector(ptx * v))
}
