use std::borrow::Cow;
use std::collections::HashMap;

use nalgebra::DVector;

use super::system::{check_grid, flow_element, ElementSpec, FlowGeneratorSystem, FlowMethod, Structure};
use super::testfn::{exp_inner, TestFunction};
use crate::dense::operator_norm;
use crate::error::{Error, Result};
use crate::ode::{OdeMethod, SparseMatrix};
use crate::weyl::{GnsVector, LocalOperator, WeylLabel};
use crate::C64;

/// Largest pair basis a pair system may reach.
pub const MAX_PAIR_BASIS: usize = 400_000;

/// `G_t(x, y) = <j_t(x*) u e(f), j_t(y) v e(g)>` for requested pairs.
#[derive(Clone, Debug)]
pub struct PairTrajectory {
    pub grid: Vec<f64>,
    /// `values[p][i]` is `G` of pair `p` at `grid[i]`.
    pub values: Vec<Vec<C64>>,
    pub error_estimate: Vec<Vec<f64>>,
    /// Number of basis-label pairs in the closed pair system.
    pub pair_dim: usize,
    /// Largest `|G_t(1, y) - F_t(y)|` over the grid and requested `y`.
    pub consistency: f64,
}

impl PairTrajectory {
    /// Columns `t, label, re, im, err`; pairs are labelled by position.
    pub fn write_csv<W: std::io::Write>(&self, labels: &[String], mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,label,re,im,err")?;
        for (p, (vals, errs)) in self.values.iter().zip(&self.error_estimate).enumerate() {
            let label = labels.get(p).cloned().unwrap_or_else(|| format!("pair{p}"));
            for ((t, v), e) in self.grid.iter().zip(vals).zip(errs) {
                writeln!(out, "{t:?},\"{label}\",{:?},{:?},{e:?}", v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Returns `sys` itself if every label of `ops` is in its basis, otherwise a
/// system rebuilt on the same window with `ops` added to the seeds.
pub fn covering<'a>(sys: &'a FlowGeneratorSystem, ops: &[&LocalOperator]) -> Result<Cow<'a, FlowGeneratorSystem>> {
    if ops.iter().all(|x| x.labels().all(|g| sys.label_index(g).is_some())) {
        return Ok(Cow::Borrowed(sys));
    }
    let mut seeds: Vec<LocalOperator> =
        vec![LocalOperator::from_terms(sys.params(), sys.basis().iter().map(|g| (g.clone(), C64::new(1.0, 0.0))))];
    seeds.extend(ops.iter().map(|x| (*x).clone()));
    Ok(Cow::Owned(FlowGeneratorSystem::build(sys.lindbladian(), sys.window(), &seeds)?))
}

fn col_l1(m: &SparseMatrix, j: usize) -> f64 {
    m.column(j).iter().map(|(_, v)| v.norm()).sum()
}

struct PairSystem {
    pairs: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    structure: Structure,
}

impl PairSystem {
    /// Closes `seeds` under the pair generator
    ///
    /// ```text
    /// (a, b) -> (L^ a, b) + (a, L^ b) + sum_j (delta_j^+ a, delta_j b)
    ///         + conj(f_j) [(delta_j a, b) + (a, delta_j b)]
    ///         + g_j [(delta_j^+ a, b) + (a, delta_j^+ b)]
    /// ```
    fn build(sys: &FlowGeneratorSystem, seeds: &[(usize, usize)]) -> Result<Self> {
        let st = &sys.structure;
        let jn = st.d.len();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut intern = |p: (usize, usize), pairs: &mut Vec<(usize, usize)>| -> Result<usize> {
            if let Some(i) = index.get(&p) {
                return Ok(*i);
            }
            if pairs.len() >= MAX_PAIR_BASIS {
                return Err(Error::Size(format!("pair basis exceeds {MAX_PAIR_BASIS} pairs")));
            }
            index.insert(p, pairs.len());
            pairs.push(p);
            Ok(pairs.len() - 1)
        };
        for p in seeds {
            intern(*p, &mut pairs)?;
        }
        type Col = Vec<(usize, C64)>;
        let mut base_cols: Vec<Col> = Vec::new();
        let mut d_cols: Vec<Vec<Col>> = vec![Vec::new(); jn];
        let mut dd_cols: Vec<Vec<Col>> = vec![Vec::new(); jn];
        let mut base_leak = Vec::new();
        let mut d_leak: Vec<Vec<f64>> = vec![Vec::new(); jn];
        let mut dd_leak: Vec<Vec<f64>> = vec![Vec::new(); jn];
        let mut next = 0;
        while next < pairs.len() {
            let (a, b) = pairs[next];
            next += 1;
            let mut col: Col = Vec::new();
            for (i, v) in st.base.column(a) {
                col.push((intern((*i, b), &mut pairs)?, *v));
            }
            for (i, v) in st.base.column(b) {
                col.push((intern((a, *i), &mut pairs)?, *v));
            }
            let mut leak = st.base_leak[a] + st.base_leak[b];
            for j in 0..jn {
                for (i, v) in st.dd[j].column(a) {
                    for (k, w) in st.d[j].column(b) {
                        col.push((intern((*i, *k), &mut pairs)?, v * w));
                    }
                }
                let (ia, la) = (col_l1(&st.dd[j], a), st.dd_leak[j][a]);
                let (ib, lb) = (col_l1(&st.d[j], b), st.d_leak[j][b]);
                leak += (ia + la) * (ib + lb) - ia * ib;
            }
            base_cols.push(col);
            base_leak.push(leak);
            for j in 0..jn {
                let mut dcol: Col = Vec::new();
                for (i, v) in st.d[j].column(a) {
                    dcol.push((intern((*i, b), &mut pairs)?, *v));
                }
                for (i, v) in st.d[j].column(b) {
                    dcol.push((intern((a, *i), &mut pairs)?, *v));
                }
                d_cols[j].push(dcol);
                d_leak[j].push(st.d_leak[j][a] + st.d_leak[j][b]);
                let mut ddcol: Col = Vec::new();
                for (i, v) in st.dd[j].column(a) {
                    ddcol.push((intern((*i, b), &mut pairs)?, *v));
                }
                for (i, v) in st.dd[j].column(b) {
                    ddcol.push((intern((a, *i), &mut pairs)?, *v));
                }
                dd_cols[j].push(ddcol);
                dd_leak[j].push(st.dd_leak[j][a] + st.dd_leak[j][b]);
            }
        }
        let n = pairs.len();
        let merge = |cols: Vec<Col>| {
            SparseMatrix::linear_combination(n, [(C64::new(1.0, 0.0), &SparseMatrix::from_columns(n, cols))])
        };
        Ok(Self {
            structure: Structure {
                dim: n,
                base: merge(base_cols),
                base_leak,
                d: d_cols.into_iter().map(merge).collect(),
                d_leak,
                dd: dd_cols.into_iter().map(merge).collect(),
                dd_leak,
            },
            pairs,
            index,
        })
    }
}

/// Solves the pair system for `G_t(x, y)` on every requested `(x, y)`.
///
/// The pairs `(1, y)` are solved alongside and compared with the single-flow
/// solution of `y`; a mismatch beyond ten times the solver tolerance is an
/// [`Error::Internal`].
pub fn pair_element(
    sys: &FlowGeneratorSystem,
    pairs: &[(LocalOperator, LocalOperator)],
    spec: &ElementSpec,
    t_grid: &[f64],
    method: Option<OdeMethod>,
) -> Result<PairTrajectory> {
    let ops: Vec<&LocalOperator> = pairs.iter().flat_map(|(x, y)| [x, y]).collect();
    let sys = covering(sys, &ops)?;
    let sys = sys.as_ref();
    let drive = sys.drive(spec)?;
    check_grid(t_grid, drive.t_max())?;
    let idx = |g: &WeylLabel| sys.label_index(g).unwrap();
    let mut seeds = Vec::new();
    for (x, y) in pairs {
        for a in x.labels() {
            for b in y.labels() {
                seeds.push((idx(a), idx(b)));
            }
        }
        seeds.extend(y.labels().map(|b| (0, idx(b))));
    }
    let ps = PairSystem::build(sys, &seeds)?;
    let e = exp_inner(&spec.f, &spec.g)?;
    let u = GnsVector(spec.u.clone());
    let params = sys.params();
    let label_op = |i: usize| LocalOperator::from_label(params, sys.basis()[i].clone(), C64::new(1.0, 0.0));
    let y0 = DVector::from_iterator(
        ps.pairs.len(),
        ps.pairs.iter().map(|(a, b)| u.inner(&GnsVector(&(&label_op(*a) * &label_op(*b)) * &spec.v)) * e),
    );
    let m = method.unwrap_or_else(|| OdeMethod::auto(ps.structure.dim));
    let sol = ps.structure.solve(&drive, &y0, t_grid, m)?;
    let bound = spec.norm_bound();
    let mut values = Vec::with_capacity(pairs.len());
    let mut error_estimate = Vec::with_capacity(pairs.len());
    let mut consistency: f64 = 0.0;
    for (x, y) in pairs {
        let mut c = DVector::zeros(ps.pairs.len());
        for (a, ca) in x.terms() {
            for (b, cb) in y.terms() {
                c[ps.index[&(idx(a), idx(b))]] += ca * cb;
            }
        }
        values.push(sol.iter().map(|s| c.dot(s)).collect::<Vec<_>>());
        let scale = bound * x.coeff_l1() * y.coeff_l1();
        let mut errs = Vec::with_capacity(t_grid.len());
        for t in t_grid {
            let leak = bound * ps.structure.leak_integral(&drive, &c, *t)?;
            errs.push(leak + m.nominal_tolerance() * scale * (1.0 + t));
        }
        for i in 1..errs.len() {
            errs[i] = errs[i].max(errs[i - 1]);
        }
        error_estimate.push(errs);

        let mut c1 = DVector::zeros(ps.pairs.len());
        for (b, cb) in y.terms() {
            c1[ps.index[&(0, idx(b))]] += cb;
        }
        let f = flow_element(sys, y, spec, t_grid, FlowMethod::Ode(Some(m)))?;
        let tol = 10.0
            * m.nominal_tolerance()
            * bound.max(1.0)
            * y.coeff_l1().max(1.0)
            * (1.0 + t_grid.last().unwrap_or(&0.0));
        for (s, fv) in sol.iter().zip(&f.values) {
            let d = (c1.dot(s) - fv).norm();
            consistency = consistency.max(d);
            if d > tol {
                return Err(Error::Internal(format!("pair system G(1, y) differs from F(y) by {d:e}")));
            }
        }
    }
    Ok(PairTrajectory { grid: t_grid.to_vec(), values, error_estimate, pair_dim: ps.pairs.len(), consistency })
}

/// `D_t = F_t(xy) - G_t(x, y)` on a time grid.
#[derive(Clone, Debug)]
pub struct HomomorphismReport {
    pub grid: Vec<f64>,
    pub defect: Vec<f64>,
    pub error_estimate: Vec<f64>,
    pub max_defect: f64,
    pub pair_dim: usize,
}

impl HomomorphismReport {
    /// `|D_t|` stays within the reported error at every time.
    pub fn within_estimate(&self) -> bool {
        self.defect.iter().zip(&self.error_estimate).all(|(d, e)| d <= e)
    }
}

pub fn homomorphism_defect(
    sys: &FlowGeneratorSystem,
    x: &LocalOperator,
    y: &LocalOperator,
    spec: &ElementSpec,
    t_grid: &[f64],
) -> Result<HomomorphismReport> {
    let xy = x * y;
    let sys = covering(sys, &[x, y, &xy])?;
    let m = OdeMethod::auto(sys.dim());
    let f = flow_element(&sys, &xy, spec, t_grid, FlowMethod::Ode(Some(m)))?;
    let g = pair_element(&sys, &[(x.clone(), y.clone())], spec, t_grid, None)?;
    let defect: Vec<f64> = f.values.iter().zip(&g.values[0]).map(|(a, b)| (a - b).norm()).collect();
    let error_estimate = f.error_estimate.iter().zip(&g.error_estimate[0]).map(|(a, b)| a + b).collect();
    Ok(HomomorphismReport {
        grid: t_grid.to_vec(),
        max_defect: defect.iter().cloned().fold(0.0, f64::max),
        defect,
        error_estimate,
        pair_dim: g.pair_dim,
    })
}

/// One member `c u e(f)` of a vector `xi = sum_i c_i u_i e(f_i)`.
#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub c: C64,
    pub u: LocalOperator,
    pub f: TestFunction,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionReport {
    /// `||j_t(x) xi||^2` as a Gram form of `j_t(x* x)`.
    pub lhs: f64,
    /// `||x||^2 ||xi||^2`.
    pub rhs: f64,
    pub xi_norm_sq: f64,
    pub error: f64,
}

impl ContractionReport {
    pub fn passes(&self) -> bool {
        self.lhs <= self.rhs + self.error && self.lhs >= -self.error
    }
}

/// Largest family accepted by [`contraction_check`].
pub const MAX_FAMILY: usize = 8;

pub fn contraction_check(
    sys: &FlowGeneratorSystem,
    x: &LocalOperator,
    family: &[FamilyMember],
    t: f64,
) -> Result<ContractionReport> {
    if family.is_empty() || family.len() > MAX_FAMILY {
        return Err(Error::Config(format!("family size must be 1..={MAX_FAMILY}")));
    }
    let xx = &x.adjoint() * x;
    let sys = covering(sys, &[&xx])?;
    let mut lhs = C64::new(0.0, 0.0);
    let mut xi = C64::new(0.0, 0.0);
    let mut error = 0.0;
    for a in family {
        for b in family {
            let spec = ElementSpec::new(a.u.clone(), a.f.clone(), b.u.clone(), b.f.clone())?;
            let w = a.c.conj() * b.c;
            let tr = flow_element(&sys, &xx, &spec, &[t], FlowMethod::default())?;
            lhs += w * tr.values[0];
            error += w.norm() * tr.error_estimate[0];
            xi += w * spec.initial(&LocalOperator::identity(sys.params()))?;
        }
    }
    let norm = operator_norm(x);
    let rhs = norm * norm * xi.re;
    Ok(ContractionReport { lhs: lhs.re, rhs, xi_norm_sq: xi.re, error: error + 1e-9 * (1.0 + rhs.abs()) })
}
