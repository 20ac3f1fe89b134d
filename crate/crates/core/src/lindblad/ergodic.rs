use super::evolve::{closure_system, default_window, Truncation};
use super::{LindbladKind, Lindbladian};
use crate::dense::{SiteWindow, StateSpec};
use crate::error::{Error, Result};
use crate::ode::LinearOperator;
use crate::weyl::{AlgebraParams, LocalOperator, WeylLabel};
use crate::C64;

fn check_state(params: &AlgebraParams, state: &StateSpec) -> Result<()> {
    if state.n() != params.n() {
        return Err(Error::Config(format!("state is {0}x{0} but N = {1}", state.n(), params.n())));
    }
    Ok(())
}

/// `P_t^phi(prod x_k) = prod (phi(x_k) + e^{-t}(x_k - phi(x_k)))`, extended
/// linearly over the Weyl strings of `x`.
pub fn partial_semigroup_exact(state: &StateSpec, x: &LocalOperator, t: f64) -> Result<LocalOperator> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("evolution time must be >= 0, got {t}")));
    }
    let params = x.params();
    check_state(&params, state)?;
    let decay = (-t).exp();
    let mut terms: Vec<LocalOperator> = Vec::with_capacity(x.num_terms());
    for (g, c) in x.terms() {
        let mut acc = LocalOperator::scalar(params, *c);
        for (site, e) in g.entries() {
            let phi = state.expectation(&params, *e);
            let w = WeylLabel::single(site.clone(), *e);
            let factor = LocalOperator::from_terms(
                params,
                [(WeylLabel::identity(), phi * (1.0 - decay)), (w, C64::new(decay, 0.0))],
            );
            acc = &acc * &factor;
        }
        terms.push(acc);
    }
    Ok(terms.iter().fold(LocalOperator::zero(params), |a, b| &a + b))
}

/// `Phi(x) = sum_g c_g prod_j Tr(rho W_{g_j})`, the product state.
pub fn ergodic_state(state: &StateSpec, x: &LocalOperator) -> Result<C64> {
    let params = x.params();
    check_state(&params, state)?;
    Ok(x.terms().map(|(g, c)| g.entries().iter().fold(*c, |acc, (_, e)| acc * state.expectation(&params, *e))).sum())
}

/// Exponential decay fit of a positive series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub r2: f64,
    pub points: usize,
}

/// Minimum coefficient of determination for a reported rate.
pub const MIN_R2: f64 = 0.999;

/// Least-squares slope of `ln v` against `t`, negated. The first 10% of the
/// grid is dropped as transient and the fit must reach `r^2 >= 0.999`.
pub fn decay_rate_fit(t: &[f64], v: &[f64]) -> Result<DecayFit> {
    if t.len() != v.len() {
        return Err(Error::Fit("time and value series differ in length".into()));
    }
    let skip = t.len() / 10;
    let (t, v) = (&t[skip..], &v[skip..]);
    if t.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points after the transient, have {}", t.len())));
    }
    if let Some(bad) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::Fit(format!("nonpositive value {bad} in decay series")));
    }
    let y: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let (slope, r2) = linear_fit(t, &y);
    if r2 < MIN_R2 {
        return Err(Error::Fit(format!("r^2 = {r2:.6} below {MIN_R2}")));
    }
    Ok(DecayFit { rate: -slope, r2, points: t.len() })
}

/// Slope and `r^2` of the least-squares line; a flat series has `r^2 = 1`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let r2 = if syy <= 1e-28 * (1.0 + my * my) { 1.0 } else { 1.0 - ss_res / syy };
    (slope, r2)
}

/// Quadrature settings for [`perturbed_ergodic_state`].
#[derive(Clone, Debug)]
pub struct QuadSpec {
    /// Simpson panels on `[0, T_cut]` (rounded up to even).
    pub panels: usize,
    /// Target for the neglected tail.
    pub tol: f64,
    /// Horizon of the probe used to fit the decay rate.
    pub t_probe: f64,
    /// Upper limit on `T_cut`.
    pub t_max: f64,
    /// Operator window; defaults to `supp(x)` padded by the Kraus diameter.
    pub window: Option<SiteWindow>,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { panels: 1 << 10, tol: 1e-10, t_probe: 20.0, t_max: 400.0, window: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbedValue {
    pub value: C64,
    pub error: f64,
    pub t_cut: f64,
    pub rate: f64,
}

/// `Phi^(c)(x) = Phi(x) + c int_0^inf Phi(L(P_t^(c)(x))) dt` for a perturbed
/// generator `L^(c) = L^phi + c L`.
///
/// The integrand is evaluated on the reachable basis of `x` under the
/// interior-truncated generator; the integral is composite Simpson on
/// `[0, T_cut]` plus an exponential tail from the fitted envelope rate.
pub fn perturbed_ergodic_state(l: &Lindbladian, x: &LocalOperator, quad: &QuadSpec) -> Result<PerturbedValue> {
    let state = match l.kind() {
        LindbladKind::Perturbed { state, .. } => state,
        _ => return Err(Error::Config("perturbed ergodic state needs a perturbed generator".into())),
    };
    let params = l.params();
    let phi_x = ergodic_state(state, x)?;
    let window = quad.window.clone().unwrap_or_else(|| default_window(l, x, 2));
    let sys = closure_system(l, x, &window, Truncation::Interior)?;
    // linear functional b -> Phi(c L_r(U_b))
    let weights: Vec<C64> = sys
        .basis
        .iter()
        .map(|g| {
            let u = LocalOperator::from_label(params, g.clone(), C64::new(1.0, 0.0));
            ergodic_state(state, &l.component_total(1, &u))
        })
        .collect::<Result<_>>()?;
    let m = sys.matrix.to_dense();
    let v0 = sys.vectorize(x);
    let integrand = |h: f64, steps: usize| -> Vec<C64> {
        let step = (&m * C64::new(h, 0.0)).exp();
        let mut v = v0.clone();
        let mut out = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            if i > 0 {
                v = &step * &v;
            }
            out.push(v.iter().zip(&weights).map(|(a, b)| a * b).sum());
        }
        out
    };

    let probe_steps = 256;
    let probe = integrand(quad.t_probe / probe_steps as f64, probe_steps);
    let env = right_envelope(&probe);
    if env[0] == 0.0 {
        return Ok(PerturbedValue { value: phi_x, error: 0.0, t_cut: 0.0, rate: f64::INFINITY });
    }
    let ts: Vec<f64> = (0..=probe_steps).map(|i| quad.t_probe * i as f64 / probe_steps as f64).collect();
    let keep: Vec<usize> = (probe_steps / 10..=probe_steps).filter(|i| env[*i] > 1e-280).collect();
    if keep.len() < 4 {
        // integrand already negligible within the probe
        let rate = 1.0 / quad.t_probe;
        return finish(phi_x, &integrand, quad, quad.t_probe, rate);
    }
    let (slope, _) = linear_fit(
        &keep.iter().map(|i| ts[*i]).collect::<Vec<_>>(),
        &keep.iter().map(|i| env[*i].ln()).collect::<Vec<_>>(),
    );
    let rate = -slope;
    if rate.is_nan() || rate <= 0.0 {
        return Err(Error::Divergence { rate });
    }
    let t_cut = ((10.0 * env[0] / (quad.tol * rate)).ln() / rate).clamp(1.0, quad.t_max);
    finish(phi_x, &integrand, quad, t_cut, rate)
}

fn finish(
    phi_x: C64,
    integrand: &dyn Fn(f64, usize) -> Vec<C64>,
    quad: &QuadSpec,
    t_cut: f64,
    rate: f64,
) -> Result<PerturbedValue> {
    let panels = quad.panels.max(2).div_ceil(2) * 2;
    let fine = integrand(t_cut / panels as f64, panels);
    let full = simpson(&fine, t_cut);
    let coarse: Vec<C64> = fine.iter().step_by(2).cloned().collect();
    let half = simpson(&coarse, t_cut);
    let end = *fine.last().unwrap();
    let env_end = right_envelope(&fine)[panels];
    let tail = end / rate;
    Ok(PerturbedValue { value: phi_x + full + tail, error: (full - half).norm() / 15.0 + env_end / rate, t_cut, rate })
}

fn right_envelope(v: &[C64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mut m = 0.0f64;
    for i in (0..v.len()).rev() {
        m = m.max(v[i].norm());
        out[i] = m;
    }
    out
}

fn simpson(v: &[C64], span: f64) -> C64 {
    let n = v.len() - 1;
    if n == 0 {
        return C64::new(0.0, 0.0);
    }
    if n % 2 == 1 {
        // fall back to the trapezoid rule on an odd panel count
        let h = span / n as f64;
        return (v.iter().sum::<C64>() - (v[0] + v[n]) * 0.5) * h;
    }
    let h = span / n as f64;
    let mut acc = v[0] + v[n];
    for (i, x) in v.iter().enumerate().take(n).skip(1) {
        acc += x * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (h / 3.0)
}
