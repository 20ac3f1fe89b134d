use std::collections::HashMap;
use std::io::Write;

use nalgebra::DVector;

use super::testfn::{exp_inner, Mode, TestFunction};
use crate::dense::{operator_norm, SiteWindow};
use crate::error::{Error, Result};
use crate::lindblad::{commuting_family, Lindbladian, Truncation};
use crate::ode::{OdeMethod, PiecewiseSystem, SparseMatrix};
use crate::weyl::{c_const, theta, AlgebraParams, GnsVector, LocalOperator, WeylLabel};
use crate::C64;

/// Largest operator basis a flow system may reach.
pub const MAX_FLOW_BASIS: usize = 20_000;
/// Quadrature subintervals per cell for leakage integrals.
const LEAK_NODES: usize = 16;

/// A linear system `y' = K(t)^T y` with `K = base + sum_j conj(f_j) D_j + g_j D_j^+`
/// together with the coefficient mass each column loses to truncation.
#[derive(Clone, Debug)]
pub(crate) struct Structure {
    pub dim: usize,
    pub base: SparseMatrix,
    pub base_leak: Vec<f64>,
    pub d: Vec<SparseMatrix>,
    pub d_leak: Vec<Vec<f64>>,
    pub dd: Vec<SparseMatrix>,
    pub dd_leak: Vec<Vec<f64>>,
}

/// Per-cell drive coefficients `conj(f_j)` and `g_j`.
#[derive(Clone, Debug)]
pub(crate) struct Drive {
    pub breaks: Vec<f64>,
    pub fbar: Vec<Vec<C64>>,
    pub g: Vec<Vec<C64>>,
}

impl Drive {
    pub fn new(noise: &[Mode], f: &TestFunction, g: &TestFunction) -> Result<Self> {
        if !f.same_grid(g) {
            return Err(Error::GridMismatch);
        }
        let cells = f.cells();
        let zero = vec![C64::new(0.0, 0.0); noise.len()];
        let mut fbar = vec![zero.clone(); cells];
        let mut gv = vec![zero; cells];
        for (j, m) in noise.iter().enumerate() {
            if let Some(s) = f.mode(m) {
                for (c, row) in fbar.iter_mut().enumerate() {
                    row[j] = s.value(c).conj();
                }
            }
            if let Some(s) = g.mode(m) {
                for (c, row) in gv.iter_mut().enumerate() {
                    row[j] = s.value(c);
                }
            }
        }
        Ok(Self { breaks: f.breaks(), fbar, g: gv })
    }

    pub fn cells(&self) -> usize {
        self.fbar.len()
    }

    pub fn t_max(&self) -> f64 {
        *self.breaks.last().unwrap()
    }
}

impl Structure {
    /// `K` on each cell.
    pub fn cell_generators(&self, drive: &Drive) -> Vec<SparseMatrix> {
        (0..drive.cells())
            .map(|c| {
                let one = C64::new(1.0, 0.0);
                let mut parts = vec![(one, &self.base)];
                for j in 0..self.d.len() {
                    if drive.fbar[c][j] != C64::new(0.0, 0.0) {
                        parts.push((drive.fbar[c][j], &self.d[j]));
                    }
                    if drive.g[c][j] != C64::new(0.0, 0.0) {
                        parts.push((drive.g[c][j], &self.dd[j]));
                    }
                }
                SparseMatrix::linear_combination(self.dim, parts)
            })
            .collect()
    }

    /// Column leak rates on each cell.
    pub fn cell_leaks(&self, drive: &Drive) -> Vec<Vec<f64>> {
        (0..drive.cells())
            .map(|c| {
                let mut l = self.base_leak.clone();
                for j in 0..self.d.len() {
                    let (a, b) = (drive.fbar[c][j].norm(), drive.g[c][j].norm());
                    for (i, v) in l.iter_mut().enumerate() {
                        *v += a * self.d_leak[j][i] + b * self.dd_leak[j][i];
                    }
                }
                l
            })
            .collect()
    }

    pub fn is_leak_free(&self) -> bool {
        let zero = |v: &Vec<f64>| v.iter().all(|x| *x == 0.0);
        zero(&self.base_leak) && self.d_leak.iter().all(zero) && self.dd_leak.iter().all(zero)
    }

    /// Forward solution `y' = K^T y` sampled at `times`.
    pub fn solve(
        &self,
        drive: &Drive,
        y0: &DVector<C64>,
        times: &[f64],
        method: OdeMethod,
    ) -> Result<Vec<DVector<C64>>> {
        let ops: Vec<SparseMatrix> = self.cell_generators(drive).iter().map(SparseMatrix::transpose).collect();
        PiecewiseSystem::new(drive.breaks.clone(), ops)?.solve(y0, times, method)
    }

    /// `int_0^t sum_b |w_b(s)| leak_b(s) ds` with `w` the backward solution of
    /// `w' = -K w`, `w(t) = c`. Multiplied by a bound on `|y(z)| / ||z||`
    /// it bounds the truncation error of `c . y(t)`.
    pub fn leak_integral(&self, drive: &Drive, c: &DVector<C64>, t: f64) -> Result<f64> {
        if self.is_leak_free() || t <= 0.0 {
            return Ok(0.0);
        }
        let gens = self.cell_generators(drive);
        let leaks = self.cell_leaks(drive);
        let mut tau_breaks = vec![0.0];
        let mut ops = Vec::new();
        let mut cells = Vec::new();
        for cell in (0..drive.cells()).rev() {
            let (lo, hi) = (drive.breaks[cell], drive.breaks[cell + 1].min(t));
            if hi <= lo {
                continue;
            }
            tau_breaks.push(t - lo);
            ops.push(gens[cell].clone());
            cells.push(cell);
        }
        let mut nodes = Vec::new();
        for i in 0..cells.len() {
            let (a, b) = (tau_breaks[i], tau_breaks[i + 1]);
            nodes.extend((0..=LEAK_NODES).map(|q| a + (b - a) * q as f64 / LEAK_NODES as f64));
        }
        let method = OdeMethod::Adaptive { rtol: 1e-8, atol: 1e-14 };
        let sol = PiecewiseSystem::new(tau_breaks.clone(), ops)?.solve(c, &nodes, method)?;
        let mut acc = 0.0;
        for (i, cell) in cells.iter().enumerate() {
            let h = (tau_breaks[i + 1] - tau_breaks[i]) / LEAK_NODES as f64;
            let rate = |w: &DVector<C64>| -> f64 { w.iter().zip(&leaks[*cell]).map(|(x, l)| x.norm() * l).sum() };
            let vals: Vec<f64> = sol[i * (LEAK_NODES + 1)..(i + 1) * (LEAK_NODES + 1)].iter().map(rate).collect();
            acc += h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[LEAK_NODES]));
        }
        Ok(acc)
    }
}

/// The structure maps `L^`, `delta_j`, `delta_j^+` of a flow restricted to
/// the labels reachable inside an operator window.
#[derive(Clone, Debug)]
pub struct FlowGeneratorSystem {
    params: AlgebraParams,
    window: SiteWindow,
    basis: Vec<WeylLabel>,
    index: HashMap<WeylLabel, usize>,
    noise: Vec<Mode>,
    pub(crate) structure: Structure,
    single_r: Option<LocalOperator>,
    lindbladian: Lindbladian,
}

/// `(u e(f), v e(g))`, the vectors a matrix element is taken between.
#[derive(Clone, Debug)]
pub struct ElementSpec {
    pub u: LocalOperator,
    pub f: TestFunction,
    pub v: LocalOperator,
    pub g: TestFunction,
}

impl ElementSpec {
    pub fn new(u: LocalOperator, f: TestFunction, v: LocalOperator, g: TestFunction) -> Result<Self> {
        u.params().check_same(&v.params())?;
        if !f.same_grid(&g) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { u, f, v, g })
    }

    /// Vacuum test functions on a single cell `[0, t_max]`.
    pub fn vacuum(u: LocalOperator, v: LocalOperator, t_max: f64) -> Result<Self> {
        let z = TestFunction::zero(t_max, 1)?;
        Self::new(u, z.clone(), v, z)
    }

    /// `||u e(f)|| ||v e(g)||`.
    pub fn norm_bound(&self) -> f64 {
        GnsVector(self.u.clone()).norm()
            * GnsVector(self.v.clone()).norm()
            * (0.5 * (self.f.l2_norm_sq() + self.g.l2_norm_sq())).exp()
    }

    /// `<u e(f), y v e(g)>`.
    pub fn initial(&self, y: &LocalOperator) -> Result<C64> {
        Ok(GnsVector(self.u.clone()).inner(&GnsVector(y * &self.v)) * exp_inner(&self.f, &self.g)?)
    }
}

impl FlowGeneratorSystem {
    /// Closes the span of `seeds` (and the identity) under `L^` and every
    /// `delta_j`, `delta_j^+` whose translate meets `window`. Images are
    /// truncated to the window and the dropped mass is recorded per column.
    pub fn build(l: &Lindbladian, window: &SiteWindow, seeds: &[LocalOperator]) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::Config("operator window is empty".into()));
        }
        let params = l.params();
        let channels = l.channels();
        let window_sites = window.sites().iter().cloned().collect();
        let mut noise = Vec::new();
        for (ci, ch) in channels.iter().enumerate() {
            for k in Lindbladian::contributing_shifts(&l.channel_support(*ch), &window_sites) {
                noise.push(Mode::new(k, ci));
            }
        }
        noise.sort();
        let mut basis = vec![WeylLabel::identity()];
        let mut index: HashMap<WeylLabel, usize> = HashMap::from([(WeylLabel::identity(), 0)]);
        for s in seeds {
            params.check_same(&s.params())?;
            if let Some(site) = s.support().into_iter().find(|p| !window.contains(p)) {
                return Err(Error::Window { support: format!("{site}"), window: format!("{:?}", window) });
            }
            for g in s.labels() {
                if !index.contains_key(g) {
                    index.insert(g.clone(), basis.len());
                    basis.push(g.clone());
                }
            }
        }
        let inside = |s: &crate::weyl::Site| window.contains(s);
        type Column = (LocalOperator, f64);
        let mut lhat_cols: Vec<Column> = vec![(LocalOperator::zero(params), 0.0)];
        let mut d_cols: Vec<Vec<Column>> = vec![vec![(LocalOperator::zero(params), 0.0)]; noise.len()];
        let mut dd_cols: Vec<Vec<Column>> = vec![vec![(LocalOperator::zero(params), 0.0)]; noise.len()];
        let mut next = 0;
        while next < basis.len() {
            let b = next;
            next += 1;
            let u = LocalOperator::from_label(params, basis[b].clone(), C64::new(1.0, 0.0));
            let mut images = Vec::with_capacity(1 + 2 * noise.len());
            images.push(l.apply_truncated(&u, Some(window), Truncation::Open));
            for m in &noise {
                let ch = channels[m.channel];
                images.push(l.delta(ch, &m.site, &u).split_by_support(inside));
                images.push(l.delta_dag(ch, &m.site, &u).split_by_support(inside));
            }
            for (img, _) in &images {
                for h in img.labels() {
                    if !index.contains_key(h) {
                        if basis.len() >= MAX_FLOW_BASIS {
                            return Err(Error::Size(format!("flow basis exceeds {MAX_FLOW_BASIS} labels")));
                        }
                        index.insert(h.clone(), basis.len());
                        basis.push(h.clone());
                    }
                }
            }
            let mut it = images.into_iter();
            set_col(&mut lhat_cols, b, it.next().unwrap());
            for j in 0..noise.len() {
                set_col(&mut d_cols[j], b, it.next().unwrap());
                set_col(&mut dd_cols[j], b, it.next().unwrap());
            }
        }
        let n = basis.len();
        let to_sparse = |cols: &[Column]| {
            let mut c: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
            for (b, (img, _)) in cols.iter().enumerate() {
                c[b] = img.terms().map(|(h, v)| (index[h], *v)).collect();
            }
            (SparseMatrix::from_columns(n, c), cols.iter().map(|(_, l)| *l).collect::<Vec<f64>>())
        };
        let (base, base_leak) = to_sparse(&pad(lhat_cols, n, params));
        let (mut d, mut d_leak, mut dd, mut dd_leak) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for j in 0..noise.len() {
            let (m, lk) = to_sparse(&pad(std::mem::take(&mut d_cols[j]), n, params));
            d.push(m);
            d_leak.push(lk);
            let (m, lk) = to_sparse(&pad(std::mem::take(&mut dd_cols[j]), n, params));
            dd.push(m);
            dd_leak.push(lk);
        }
        Ok(Self {
            params,
            window: window.clone(),
            basis,
            index,
            noise,
            structure: Structure { dim: n, base, base_leak, d, d_leak, dd, dd_leak },
            single_r: l.single_r().cloned(),
            lindbladian: l.clone(),
        })
    }

    pub fn params(&self) -> AlgebraParams {
        self.params
    }

    pub fn window(&self) -> &SiteWindow {
        &self.window
    }

    pub fn basis(&self) -> &[WeylLabel] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn noise_modes(&self) -> &[Mode] {
        &self.noise
    }

    pub fn lindbladian(&self) -> &Lindbladian {
        &self.lindbladian
    }

    pub fn lhat_matrix(&self) -> &SparseMatrix {
        &self.structure.base
    }

    pub fn delta_matrix(&self, j: usize) -> &SparseMatrix {
        &self.structure.d[j]
    }

    pub fn delta_dag_matrix(&self, j: usize) -> &SparseMatrix {
        &self.structure.dd[j]
    }

    pub fn lhat_leak(&self) -> &[f64] {
        &self.structure.base_leak
    }

    pub fn is_leak_free(&self) -> bool {
        self.structure.is_leak_free()
    }

    pub fn label_index(&self, g: &WeylLabel) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn vectorize(&self, x: &LocalOperator) -> Result<DVector<C64>> {
        let mut v = DVector::zeros(self.basis.len());
        for (g, c) in x.terms() {
            let i = self.index.get(g).ok_or_else(|| Error::Window {
                support: format!("{g}"),
                window: format!("basis of {:?}", self.window),
            })?;
            v[*i] = *c;
        }
        Ok(v)
    }

    pub(crate) fn drive(&self, spec: &ElementSpec) -> Result<Drive> {
        Drive::new(&self.noise, &spec.f, &spec.g)
    }

    /// `F_0(b) = <u, U_b v> <e(f), e(g)>` for every basis label.
    pub(crate) fn initial_vector(&self, spec: &ElementSpec) -> Result<DVector<C64>> {
        spec.u.params().check_same(&self.params)?;
        let e = exp_inner(&spec.f, &spec.g)?;
        let u = GnsVector(spec.u.clone());
        Ok(DVector::from_iterator(
            self.basis.len(),
            self.basis.iter().map(|b| {
                let ub = LocalOperator::from_label(self.params, b.clone(), C64::new(1.0, 0.0));
                u.inner(&GnsVector(&ub * &spec.v)) * e
            }),
        ))
    }
}

fn set_col(cols: &mut Vec<(LocalOperator, f64)>, b: usize, col: (LocalOperator, f64)) {
    if cols.len() <= b {
        let params = col.0.params();
        cols.resize(b + 1, (LocalOperator::zero(params), 0.0));
    }
    cols[b] = col;
}

fn pad(mut cols: Vec<(LocalOperator, f64)>, n: usize, params: AlgebraParams) -> Vec<(LocalOperator, f64)> {
    cols.resize(n, (LocalOperator::zero(params), 0.0));
    cols
}

/// Solver for matrix elements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowMethod {
    /// Piecewise-constant linear ODE; `None` picks a method by dimension.
    Ode(Option<OdeMethod>),
    /// Picard iteration to the given depth, evaluated exactly on each cell.
    Picard(usize),
}

impl Default for FlowMethod {
    fn default() -> Self {
        FlowMethod::Ode(None)
    }
}

/// `F_t(y) = <u e(f), j_t(y) v e(g)>` on a time grid.
#[derive(Clone, Debug)]
pub struct MatrixElementTrajectory {
    pub grid: Vec<f64>,
    /// `F_t(U_b)` for every basis label `b`, one vector per time.
    pub basis_values: Vec<DVector<C64>>,
    /// `F_t(x)` for the requested observable.
    pub values: Vec<C64>,
    pub error_estimate: Vec<f64>,
}

impl MatrixElementTrajectory {
    /// Columns `t, label, re, im, err`.
    pub fn write_csv<W: Write>(&self, label: &str, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,label,re,im,err")?;
        for ((t, v), e) in self.grid.iter().zip(&self.values).zip(&self.error_estimate) {
            writeln!(out, "{t:?},\"{label}\",{:?},{:?},{e:?}", v.re, v.im)?;
        }
        Ok(())
    }
}

pub(crate) fn check_grid(t_grid: &[f64], t_max: f64) -> Result<()> {
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("time grid must be sorted".into()));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t >= 0.0 && **t <= t_max * (1.0 + 1e-12))) {
        return Err(Error::Domain(format!("time {t} outside [0, {t_max}]")));
    }
    Ok(())
}

/// Solves the matrix-element equation
///
/// ```text
/// dF_t(y)/dt = sum_j [ g_j(t) F_t(delta_j^+ y) + conj(f_j(t)) F_t(delta_j y) ] + F_t(L^ y)
/// F_0(y) = <u, y v> <e(f), e(g)>
/// ```
///
/// on the system basis. The error estimate adds the truncation leak,
/// propagated backward from `x` and weighted by `||u e(f)|| ||v e(g)||`,
/// to the solver tolerance (and, for Picard, the iteration tail).
pub fn flow_element(
    sys: &FlowGeneratorSystem,
    x: &LocalOperator,
    spec: &ElementSpec,
    t_grid: &[f64],
    method: FlowMethod,
) -> Result<MatrixElementTrajectory> {
    let drive = sys.drive(spec)?;
    check_grid(t_grid, drive.t_max())?;
    let c = sys.vectorize(x)?;
    let y0 = sys.initial_vector(spec)?;
    let bound = spec.norm_bound();
    let (basis_values, solver_err): (Vec<DVector<C64>>, Vec<f64>) = match method {
        FlowMethod::Ode(m) => {
            let m = m.unwrap_or_else(|| OdeMethod::auto(sys.dim()));
            let sol = sys.structure.solve(&drive, &y0, t_grid, m)?;
            let scale = bound * x.coeff_l1();
            let err = t_grid.iter().map(|t| m.nominal_tolerance() * scale.max(1e-300) * (1.0 + t)).collect();
            (sol, err)
        }
        FlowMethod::Picard(n) => {
            let sol = picard_solve(&sys.structure, &drive, &y0, t_grid, n)?;
            let r = sys.single_r.as_ref();
            let err = t_grid
                .iter()
                .map(|t| match r {
                    Some(_) => picard_error_bound(&sys.lindbladian, x, &spec.f, *t, n).map(|b| b * bound),
                    None => Err(Error::Config("Picard bound needs a single-r generator".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            (sol, err)
        }
    };
    let values: Vec<C64> = basis_values.iter().map(|v| c.dot(v)).collect();
    let mut error_estimate = Vec::with_capacity(t_grid.len());
    for (i, t) in t_grid.iter().enumerate() {
        let leak = bound * sys.structure.leak_integral(&drive, &c, *t)?;
        error_estimate.push(leak + solver_err[i]);
    }
    for i in 1..error_estimate.len() {
        error_estimate[i] = error_estimate[i].max(error_estimate[i - 1]);
    }
    Ok(MatrixElementTrajectory { grid: t_grid.to_vec(), basis_values, values, error_estimate })
}

/// `j_t^(n)` matrix elements: `F^(n)_t = F_0 + int_0^t K^T F^(n-1)`, with
/// `F^(0)_t = F_0`. On each cell `F^(n)` is a polynomial of degree `n` and is
/// integrated exactly.
fn picard_solve(
    st: &Structure,
    drive: &Drive,
    y0: &DVector<C64>,
    times: &[f64],
    depth: usize,
) -> Result<Vec<DVector<C64>>> {
    let ops: Vec<SparseMatrix> = st.cell_generators(drive).iter().map(SparseMatrix::transpose).collect();
    let cells = drive.cells();
    // poly[c][p]: coefficient of (s - breaks[c])^p on cell c
    let mut poly: Vec<Vec<DVector<C64>>> = vec![vec![y0.clone()]; cells];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(cells);
        let mut start = y0.clone();
        for (c, op) in ops.iter().enumerate() {
            let h = drive.breaks[c + 1] - drive.breaks[c];
            let mut coeffs = vec![start.clone()];
            for (p, a) in poly[c].iter().enumerate() {
                coeffs.push(crate::ode::LinearOperator::apply(op, a) / C64::new((p + 1) as f64, 0.0));
            }
            start = eval_poly(&coeffs, h);
            next.push(coeffs);
        }
        poly = next;
    }
    Ok(times
        .iter()
        .map(|t| {
            let c = drive.breaks[1..].partition_point(|b| b < t).min(cells - 1);
            eval_poly(&poly[c], t - drive.breaks[c])
        })
        .collect())
}

fn eval_poly(coeffs: &[DVector<C64>], s: f64) -> DVector<C64> {
    let mut acc = coeffs.last().unwrap().clone();
    for a in coeffs.iter().rev().skip(1) {
        acc = acc * C64::new(s, 0.0) + a;
    }
    acc
}

/// `c_f = 2 e^{gamma_f(t0)} (1 + ||f||_inf^2)`.
pub fn c_f(f: &TestFunction, t0: f64) -> f64 {
    2.0 * f.gamma(t0).exp() * (1.0 + f.sup_norm().powi(2))
}

/// Relative bound on `||(j_t - j_t^(n))(x) u e(f)|| / ||u e(f)||` for
/// `t <= t0`:
///
/// ```text
/// sum_{m > n} (t0 c_f)^{m/2} / sqrt(m!) * ((2 + ||r||) 2 theta_1(r) c_x)^m
/// ```
///
/// The bracket majorizes the enumerated derivation sums over all sign
/// patterns (a pattern with `p` zeros contributes `||r||^p (2 theta_1 c_x)^m`).
/// Needs a single commuting `r`.
pub fn picard_error_bound(l: &Lindbladian, x: &LocalOperator, f: &TestFunction, t0: f64, n: usize) -> Result<f64> {
    let r =
        l.single_r().ok_or_else(|| Error::Config("Picard bound needs a generator built from one operator r".into()))?;
    if !commuting_family(r) {
        return Err(Error::Config("Picard bound needs translates of r to commute".into()));
    }
    if t0 <= 0.0 {
        return Ok(0.0);
    }
    let k = (2.0 + operator_norm(r)) * 2.0 * theta(r, 1) * c_const(x);
    if k == 0.0 {
        return Ok(0.0);
    }
    let half_log = 0.5 * (t0 * c_f(f, t0)).ln();
    let log_k = k.ln();
    let mut log_fact = 0.0;
    let mut acc = 0.0;
    let mut prev = f64::INFINITY;
    for m in 1..2_000_000usize {
        log_fact += (m as f64).ln();
        let log_term = m as f64 * (half_log + log_k) - 0.5 * log_fact;
        if m > n {
            let term = log_term.exp();
            acc += term;
            if log_term < prev && (term <= acc * 1e-17 || term == 0.0) {
                return Ok(acc);
            }
        }
        prev = log_term;
    }
    Ok(f64::INFINITY)
}

/// `S_K = sum_{|j|_inf <= K} ||r_j u||^2` for `K = 1..=k_max`.
pub fn hp_divergence_witness(r: &LocalOperator, u: &LocalOperator, k_max: usize) -> Result<Vec<f64>> {
    r.params().check_same(&u.params())?;
    if k_max == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let d = r.params().d();
    let k = k_max as i64;
    let mut shells = vec![0.0; k_max + 1];
    let mut coords = vec![-k; d];
    loop {
        let j = crate::weyl::Site::new(&coords);
        let shell = j.sup_norm() as usize;
        shells[shell] += GnsVector(&r.translate(&j) * u).norm_sq();
        let mut axis = 0;
        loop {
            if axis == d {
                let mut out = Vec::with_capacity(k_max);
                let mut acc = shells[0];
                for s in &shells[1..] {
                    acc += s;
                    out.push(acc);
                }
                return Ok(out);
            }
            coords[axis] += 1;
            if coords[axis] <= k {
                break;
            }
            coords[axis] = -k;
            axis += 1;
        }
    }
}
