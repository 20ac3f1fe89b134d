//! Linear ODEs `y' = A(t) y` with `A` constant on each cell of a partition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

/// Systems above this dimension are never exponentiated densely.
pub const EXPM_MAX_DIM: usize = 512;

/// A linear map usable as an ODE generator.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<C64>) -> DVector<C64>;
    fn to_dense(&self) -> DMatrix<C64>;
}

impl LinearOperator for DMatrix<C64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        self * x
    }

    fn to_dense(&self) -> DMatrix<C64> {
        self.clone()
    }
}

/// Square matrix stored column by column as `(row, value)` lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    cols: Vec<Vec<(usize, C64)>>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, cols: vec![Vec::new(); n] }
    }

    pub fn from_columns(n: usize, cols: Vec<Vec<(usize, C64)>>) -> Self {
        assert_eq!(cols.len(), n);
        Self { n, cols }
    }

    pub fn column(&self, j: usize) -> &[(usize, C64)] {
        &self.cols[j]
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    /// `sum_i w_i M_i` with entries merged per column.
    pub fn linear_combination<'a>(n: usize, parts: impl IntoIterator<Item = (C64, &'a SparseMatrix)>) -> Self {
        let mut cols: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
        for (w, m) in parts {
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            assert_eq!(m.n, n);
            for (j, col) in m.cols.iter().enumerate() {
                cols[j].extend(col.iter().map(|(i, v)| (*i, v * w)));
            }
        }
        for col in &mut cols {
            col.sort_by_key(|(i, _)| *i);
            let mut merged: Vec<(usize, C64)> = Vec::with_capacity(col.len());
            for (i, v) in col.drain(..) {
                match merged.last_mut() {
                    Some((k, acc)) if *k == i => *acc += v,
                    _ => merged.push((i, v)),
                }
            }
            merged.retain(|(_, v)| v.norm() > 0.0);
            *col = merged;
        }
        Self { n, cols }
    }

    pub fn transpose(&self) -> Self {
        let mut cols: Vec<Vec<(usize, C64)>> = vec![Vec::new(); self.n];
        for (j, col) in self.cols.iter().enumerate() {
            for (i, v) in col {
                cols[*i].push((j, *v));
            }
        }
        Self { n: self.n, cols }
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::zeros(self.n);
        for (j, col) in self.cols.iter().enumerate() {
            let xj = x[j];
            if xj == C64::new(0.0, 0.0) {
                continue;
            }
            for (i, v) in col {
                y[*i] += v * xj;
            }
        }
        y
    }

    fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (j, col) in self.cols.iter().enumerate() {
            for (i, v) in col {
                m[(*i, j)] += v;
            }
        }
        m
    }
}

/// Time stepping scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OdeMethod {
    /// Exact propagator `exp(A h)` per interval.
    Expm,
    /// Classical RK4 with the given number of steps per cell.
    Rk4 { substeps: usize },
    /// Dormand-Prince 5(4) with error control.
    Adaptive { rtol: f64, atol: f64 },
}

impl Default for OdeMethod {
    fn default() -> Self {
        OdeMethod::Adaptive { rtol: 1e-12, atol: 1e-14 }
    }
}

impl OdeMethod {
    /// `Expm` for small systems, otherwise the adaptive scheme.
    pub fn auto(dim: usize) -> Self {
        if dim <= 256 {
            OdeMethod::Expm
        } else {
            OdeMethod::default()
        }
    }

    /// Rough per-unit-time accuracy, used in error budgets.
    pub fn nominal_tolerance(&self) -> f64 {
        match self {
            OdeMethod::Expm => 1e-12,
            OdeMethod::Rk4 { .. } => 1e-10,
            OdeMethod::Adaptive { rtol, .. } => rtol.max(1e-13) * 10.0,
        }
    }
}

/// `y' = A_i y` for `t` in `[breaks[i], breaks[i+1]]`.
#[derive(Clone, Debug)]
pub struct PiecewiseSystem<M> {
    breaks: Vec<f64>,
    ops: Vec<M>,
}

impl<M: LinearOperator> PiecewiseSystem<M> {
    pub fn new(breaks: Vec<f64>, ops: Vec<M>) -> Result<Self> {
        if breaks.len() != ops.len() + 1 || ops.is_empty() {
            return Err(Error::Config("need one operator per cell and at least one cell".into()));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("cell breaks must be strictly increasing".into()));
        }
        let n = ops[0].dim();
        if ops.iter().any(|m| m.dim() != n) {
            return Err(Error::Config("cell operators have different dimensions".into()));
        }
        Ok(Self { breaks, ops })
    }

    /// A single cell `[0, t_end]`.
    pub fn constant(op: M, t_end: f64) -> Result<Self> {
        Self::new(vec![0.0, t_end], vec![op])
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn ops(&self) -> &[M] {
        &self.ops
    }

    /// Solves from `y0` at `breaks[0]` and returns `y` at each requested
    /// time. Times must be sorted and lie inside the partition.
    pub fn solve(&self, y0: &DVector<C64>, times: &[f64], method: OdeMethod) -> Result<Vec<DVector<C64>>> {
        let (t_lo, t_hi) = (self.breaks[0], *self.breaks.last().unwrap());
        let slack = 1e-12 * (1.0 + t_hi.abs());
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("output times must be sorted".into()));
        }
        if let Some(t) = times.iter().find(|t| **t < t_lo - slack || **t > t_hi + slack) {
            return Err(Error::Domain(format!("time {t} outside [{t_lo}, {t_hi}]")));
        }
        if y0.len() != self.dim() {
            return Err(Error::Size(format!("initial vector has {} entries, system {}", y0.len(), self.dim())));
        }
        if matches!(method, OdeMethod::Expm) && self.dim() > EXPM_MAX_DIM {
            return Err(Error::Size(format!("dense exponential of a {}-dimensional system", self.dim())));
        }
        let mut out = Vec::with_capacity(times.len());
        let mut y = y0.clone();
        let mut t = t_lo;
        let mut pending = times.iter().peekable();
        while let Some(&&tq) = pending.peek() {
            if tq <= t + slack {
                out.push(y.clone());
                pending.next();
            } else {
                break;
            }
        }
        for (cell, op) in self.ops.iter().enumerate() {
            let cell_end = self.breaks[cell + 1];
            let cell_len = cell_end - self.breaks[cell];
            let mut dense = matches!(method, OdeMethod::Expm).then(|| ExpmCache::new(op.to_dense()));
            loop {
                let next_out = pending.peek().map(|t| **t).filter(|tq| *tq < cell_end - slack);
                let target = next_out.unwrap_or(cell_end);
                if target > t {
                    y = advance(op, dense.as_mut(), &y, target - t, cell_len, method)?;
                    t = target;
                }
                match next_out {
                    Some(_) => {
                        out.push(y.clone());
                        pending.next();
                    }
                    None => break,
                }
            }
            t = cell_end;
            while let Some(&&tq) = pending.peek() {
                if tq <= t + slack {
                    out.push(y.clone());
                    pending.next();
                } else {
                    break;
                }
            }
        }
        Ok(out)
    }
}

/// `exp(A h)` memoised by step length (rounded to `2^-48`).
struct ExpmCache {
    a: DMatrix<C64>,
    steps: Vec<(u64, DMatrix<C64>)>,
}

impl ExpmCache {
    fn new(a: DMatrix<C64>) -> Self {
        Self { a, steps: Vec::new() }
    }

    fn propagator(&mut self, h: f64) -> &DMatrix<C64> {
        let key = (h * (1u64 << 48) as f64).round() as u64;
        let pos = match self.steps.iter().position(|(k, _)| *k == key) {
            Some(p) => p,
            None => {
                if self.steps.len() >= 8 {
                    self.steps.remove(0);
                }
                self.steps.push((key, (&self.a * C64::new(h, 0.0)).exp()));
                self.steps.len() - 1
            }
        };
        &self.steps[pos].1
    }
}

fn advance<M: LinearOperator>(
    op: &M,
    dense: Option<&mut ExpmCache>,
    y: &DVector<C64>,
    h: f64,
    cell_len: f64,
    method: OdeMethod,
) -> Result<DVector<C64>> {
    match method {
        OdeMethod::Expm => {
            let cache = dense.expect("dense generator prepared for Expm");
            Ok(cache.propagator(h) * y)
        }
        OdeMethod::Rk4 { substeps } => {
            let steps = ((substeps.max(1) as f64) * h / cell_len).ceil().max(1.0) as usize;
            let dt = h / steps as f64;
            let mut y = y.clone();
            for _ in 0..steps {
                y = rk4_step(op, &y, dt);
            }
            Ok(y)
        }
        OdeMethod::Adaptive { rtol, atol } => dopri5(op, y, h, rtol, atol),
    }
}

fn rk4_step<M: LinearOperator>(op: &M, y: &DVector<C64>, h: f64) -> DVector<C64> {
    let hc = C64::new(h, 0.0);
    let half = C64::new(0.5 * h, 0.0);
    let k1 = op.apply(y);
    let k2 = op.apply(&(y + &k1 * half));
    let k3 = op.apply(&(y + &k2 * half));
    let k4 = op.apply(&(y + &k3 * hc));
    y + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (hc / 6.0)
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

fn dopri5<M: LinearOperator>(op: &M, y0: &DVector<C64>, span: f64, rtol: f64, atol: f64) -> Result<DVector<C64>> {
    let mut y = y0.clone();
    let mut t = 0.0;
    let mut h = span.min(0.1);
    let mut k0 = op.apply(&y);
    let mut steps = 0usize;
    while t < span {
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::Internal("adaptive integrator exceeded step budget".into()));
        }
        let last = t + h >= span;
        if last {
            h = span - t;
        }
        let mut k: Vec<DVector<C64>> = vec![k0.clone()];
        for row in A.iter() {
            let mut stage = y.clone();
            for (j, a) in row.iter().enumerate().take(k.len()) {
                if *a != 0.0 {
                    stage += &k[j] * C64::new(h * a, 0.0);
                }
            }
            k.push(op.apply(&stage));
        }
        // k[6] is evaluated at the fifth-order solution (FSAL)
        let mut y_new = y.clone();
        for (j, b) in A[5].iter().enumerate() {
            if *b != 0.0 {
                y_new += &k[j] * C64::new(h * b, 0.0);
            }
        }
        let mut err = 0.0f64;
        for i in 0..y.len() {
            let mut e = C64::new(0.0, 0.0);
            for (j, c) in E.iter().enumerate() {
                e += k[j][i] * (h * c);
            }
            let scale = atol + rtol * y[i].norm().max(y_new[i].norm());
            err = err.max(e.norm() / scale);
        }
        if err <= 1.0 {
            t = if last { span } else { t + h };
            y = y_new;
            k0 = k.pop().unwrap();
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * span.max(1.0) {
            return Err(Error::Internal("adaptive step size underflow".into()));
        }
    }
    Ok(y)
}
