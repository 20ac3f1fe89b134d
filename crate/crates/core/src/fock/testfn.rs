use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::weyl::Site;
use crate::C64;

/// Piecewise-constant function on a uniform partition of `[0, t_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    t_max: f64,
    values: Vec<C64>,
}

impl StepFunction {
    pub fn new(t_max: f64, values: Vec<C64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("step function needs at least one cell".into()));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::Config(format!("step function horizon must be positive, got {t_max}")));
        }
        Ok(Self { t_max, values })
    }

    pub fn zero(t_max: f64, cells: usize) -> Result<Self> {
        Self::new(t_max, vec![C64::new(0.0, 0.0); cells])
    }

    pub fn constant(t_max: f64, cells: usize, c: C64) -> Result<Self> {
        Self::new(t_max, vec![c; cells])
    }

    /// `c` on the cells lying inside `[0, t]`, zero elsewhere.
    pub fn indicator(t_max: f64, cells: usize, t: f64, c: C64) -> Result<Self> {
        let dt = t_max / cells as f64;
        let values = (0..cells)
            .map(|i| if (i as f64 + 1.0) * dt <= t + 1e-12 * t_max { c } else { C64::new(0.0, 0.0) })
            .collect();
        Self::new(t_max, values)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.values.len() as f64
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> C64 {
        self.values[cell]
    }

    pub fn same_grid(&self, other: &StepFunction) -> bool {
        self.values.len() == other.values.len() && self.t_max == other.t_max
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == C64::new(0.0, 0.0))
    }

    /// `int conj(f) g`.
    pub fn inner(&self, other: &StepFunction) -> Result<C64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum::<C64>() * self.dt())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum::<f64>() * self.dt()
    }
}

/// A noise mode: channel `channel` of the generator translated to `site`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mode {
    pub site: Site,
    pub channel: usize,
}

impl Mode {
    pub fn new(site: Site, channel: usize) -> Self {
        Self { site, channel }
    }
}

/// Finitely many step-function modes on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    t_max: f64,
    cells: usize,
    modes: BTreeMap<Mode, StepFunction>,
}

impl TestFunction {
    pub fn zero(t_max: f64, cells: usize) -> Result<Self> {
        StepFunction::zero(t_max, cells)?;
        Ok(Self { t_max, cells, modes: BTreeMap::new() })
    }

    pub fn single(mode: Mode, f: StepFunction) -> Self {
        let mut out = Self { t_max: f.t_max(), cells: f.cells(), modes: BTreeMap::new() };
        if !f.is_zero() {
            out.modes.insert(mode, f);
        }
        out
    }

    /// Adds (or replaces) one mode; the grid must match.
    pub fn with_mode(mut self, mode: Mode, f: StepFunction) -> Result<Self> {
        if f.t_max() != self.t_max || f.cells() != self.cells {
            return Err(Error::GridMismatch);
        }
        if f.is_zero() {
            self.modes.remove(&mode);
        } else {
            self.modes.insert(mode, f);
        }
        Ok(self)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.cells as f64
    }

    pub fn modes(&self) -> &BTreeMap<Mode, StepFunction> {
        &self.modes
    }

    pub fn mode(&self, m: &Mode) -> Option<&StepFunction> {
        self.modes.get(m)
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn same_grid(&self, other: &TestFunction) -> bool {
        self.t_max == other.t_max && self.cells == other.cells
    }

    /// Cell breaks `0, dt, ..., t_max`.
    pub fn breaks(&self) -> Vec<f64> {
        (0..=self.cells).map(|i| self.t_max * i as f64 / self.cells as f64).collect()
    }

    /// `sum_k int conj(f_k) g_k`.
    pub fn inner(&self, other: &TestFunction) -> Result<C64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let mut acc = C64::new(0.0, 0.0);
        for (m, f) in &self.modes {
            if let Some(g) = other.modes.get(m) {
                acc += f.inner(g)?;
            }
        }
        Ok(acc)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.modes.values().map(StepFunction::l2_norm_sq).sum()
    }

    /// `||f(s)||^2 = sum_k |f_k(s)|^2` on each cell.
    pub fn pointwise_norm_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cells];
        for f in self.modes.values() {
            for (o, v) in out.iter_mut().zip(f.values()) {
                *o += v.norm_sqr();
            }
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norm_sq().into_iter().fold(0.0, f64::max).sqrt()
    }

    /// `gamma_f(t0) = int_0^t0 (1 + ||f(s)||^2) ds`, exact on the grid
    /// (zero extension beyond `t_max`).
    pub fn gamma(&self, t0: f64) -> f64 {
        let dt = self.dt();
        let mut acc = t0;
        for (i, v) in self.pointwise_norm_sq().into_iter().enumerate() {
            let lo = i as f64 * dt;
            let overlap = (t0.min(lo + dt) - lo).max(0.0);
            acc += v * overlap;
        }
        acc
    }

    /// First time after which every mode vanishes.
    pub fn support_end(&self) -> f64 {
        let dt = self.dt();
        self.modes
            .values()
            .filter_map(|f| f.values().iter().rposition(|v| *v != C64::new(0.0, 0.0)))
            .map(|i| (i + 1) as f64 * dt)
            .fold(0.0, f64::max)
    }

    /// `(f o shift_j)_k = f_{k+j}`.
    pub fn shift(&self, j: &Site) -> TestFunction {
        let modes = self.modes.iter().map(|(m, f)| (Mode::new(m.site.sub(j), m.channel), f.clone())).collect();
        Self { t_max: self.t_max, cells: self.cells, modes }
    }

    /// Modes restricted by a predicate.
    pub fn restrict(&self, mut keep: impl FnMut(&Mode) -> bool) -> TestFunction {
        let modes = self.modes.iter().filter(|(m, _)| keep(m)).map(|(m, f)| (m.clone(), f.clone())).collect();
        Self { t_max: self.t_max, cells: self.cells, modes }
    }
}

/// `<e(f), e(g)> = exp(<f, g>)`.
pub fn exp_inner(f: &TestFunction, g: &TestFunction) -> Result<C64> {
    Ok(f.inner(g)?.exp())
}

/// Parses
///
/// ```text
/// grid <t_max> <cells>
/// <site>[/<channel>] ; <re> <im> ; <re> <im> ; ...
/// ```
///
/// with one value per cell, `site` as comma separated coordinates and `#`
/// comments.
pub fn parse_test_function(d: usize, text: &str) -> Result<TestFunction> {
    let err = |line: usize, msg: String| Error::Parse { line, msg };
    let mut out: Option<TestFunction> = None;
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix("grid") {
            if out.is_some() {
                return Err(err(line, "duplicate grid header".into()));
            }
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(err(line, "expected `grid <t_max> <cells>`".into()));
            }
            let t_max: f64 = parts[0].parse().map_err(|_| err(line, format!("bad horizon `{}`", parts[0])))?;
            let cells: usize = parts[1].parse().map_err(|_| err(line, format!("bad cell count `{}`", parts[1])))?;
            if cells == 0 {
                return Err(err(line, "cell count must be positive".into()));
            }
            out = Some(TestFunction::zero(t_max, cells).map_err(|e| err(line, e.to_string()))?);
            continue;
        }
        let tf = out.take().ok_or_else(|| err(line, "mode line before grid header".into()))?;
        let mut fields = body.split(';').map(str::trim);
        let head = fields.next().unwrap_or("");
        let (site_txt, channel) = match head.split_once('/') {
            Some((s, c)) => (s.trim(), c.trim().parse::<usize>().map_err(|_| err(line, format!("bad channel `{c}`")))?),
            None => (head, 0),
        };
        let coords = site_txt
            .split(',')
            .map(|c| c.trim().parse::<i64>().map_err(|_| err(line, format!("bad coordinate `{c}`"))))
            .collect::<Result<Vec<_>>>()?;
        if coords.len() != d {
            return Err(err(line, format!("site has {} coordinates, lattice dimension is {d}", coords.len())));
        }
        let values = fields
            .map(|f| {
                let p: Vec<&str> = f.split_whitespace().collect();
                if p.len() != 2 {
                    return Err(err(line, format!("expected `re im`, got `{f}`")));
                }
                let re = p[0].parse::<f64>().map_err(|_| err(line, format!("bad number `{}`", p[0])))?;
                let im = p[1].parse::<f64>().map_err(|_| err(line, format!("bad number `{}`", p[1])))?;
                Ok(C64::new(re, im))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != tf.cells() {
            return Err(err(line, format!("{} values for {} cells", values.len(), tf.cells())));
        }
        let mode = Mode::new(Site::new(&coords), channel);
        if tf.modes.contains_key(&mode) {
            return Err(err(line, "mode listed twice".into()));
        }
        let f = StepFunction::new(tf.t_max(), values).map_err(|e| err(line, e.to_string()))?;
        out = Some(tf.with_mode(mode, f).map_err(|e| err(line, e.to_string()))?);
    }
    out.ok_or_else(|| err(0, "missing grid header".into()))
}

pub fn write_test_function(f: &TestFunction) -> String {
    let mut s = format!("grid {:?} {}\n", f.t_max(), f.cells());
    for (m, v) in f.modes() {
        let site: Vec<String> = m.site.coords().iter().map(i64::to_string).collect();
        let _ = write!(s, "{}/{}", site.join(","), m.channel);
        for c in v.values() {
            let _ = write!(s, " ; {:?} {:?}", c.re, c.im);
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> C64 {
        C64::new(1.0, 0.0)
    }

    #[test]
    fn exp_inner_examples() {
        let z = TestFunction::zero(1.0, 4).unwrap();
        assert_eq!(exp_inner(&z, &z).unwrap(), one());
        let m0 = Mode::new(Site::new(&[0]), 0);
        let f = TestFunction::single(m0.clone(), StepFunction::constant(1.0, 4, one()).unwrap());
        assert!((exp_inner(&f, &f).unwrap() - C64::new(std::f64::consts::E, 0.0)).norm() < 1e-15);
        let g = TestFunction::single(Mode::new(Site::new(&[1]), 0), StepFunction::constant(1.0, 4, one()).unwrap());
        assert_eq!(exp_inner(&f, &g).unwrap(), one());
        let other = TestFunction::zero(2.0, 4).unwrap();
        assert!(matches!(exp_inner(&f, &other), Err(Error::GridMismatch)));
    }

    #[test]
    fn gamma_and_norms() {
        let m0 = Mode::new(Site::new(&[0]), 0);
        let f = TestFunction::single(m0, StepFunction::indicator(2.0, 4, 1.0, C64::new(0.0, 2.0)).unwrap());
        assert!((f.l2_norm_sq() - 4.0).abs() < 1e-15);
        assert!((f.gamma(1.0) - 5.0).abs() < 1e-15);
        assert!((f.gamma(2.0) - 6.0).abs() < 1e-15);
        assert_eq!(f.sup_norm(), 2.0);
        assert_eq!(f.support_end(), 1.0);
        assert_eq!(TestFunction::zero(1.0, 2).unwrap().gamma(1.0), 1.0);
    }

    #[test]
    fn shift_moves_modes_back() {
        let f = TestFunction::single(Mode::new(Site::new(&[3]), 1), StepFunction::constant(1.0, 1, one()).unwrap());
        let s = f.shift(&Site::new(&[1]));
        assert!(s.mode(&Mode::new(Site::new(&[2]), 1)).is_some());
    }

    #[test]
    fn text_round_trip() {
        let text = "# drive\ngrid 2 3\n0 ; 1 0 ; 0.5 -0.25 ; 0 0\n1/2 ; 0 1 ; 0 0 ; 1e-3 0\n";
        let f = parse_test_function(1, text).unwrap();
        assert_eq!(f.modes().len(), 2);
        let back = parse_test_function(1, &write_test_function(&f)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn text_errors() {
        assert!(matches!(parse_test_function(1, "0 ; 1 0"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_test_function(1, "grid 1 2\n0 ; 1 0"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_test_function(2, "grid 1 1\n0 ; 1 0"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_test_function(1, "grid 1 1\n0 ; 1 x"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_test_function(1, "").is_err());
    }
}
