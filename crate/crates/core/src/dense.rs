//! Dense matrix realisations on finite site windows.
//!
//! Everything here works directly with `N^|Λ| x N^|Λ|` matrices and is kept
//! deliberately naive: it is the reference the symbolic code is tested
//! against, not a fast path.
//!
//! Tensor factors follow the window order with the first site most
//! significant. Generators are vectorised in the `U_g` basis, ordered by the
//! [`WeylLabel`] ordering, one column per input label.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::weyl::{AlgebraParams, LocalOperator, Site, SiteExponent, WeylLabel};
use crate::C64;

/// Largest realised Hilbert-space dimension `N^|Λ|`.
pub const MAX_DIM: usize = 1 << 12;
/// Largest vectorised dimension `N^(2|Λ|)` accepted for superoperators.
pub const MAX_SUPEROP_DIM: usize = 10_000;
/// Tolerance for Hermiticity, unitarity and state checks.
pub const MATRIX_TOL: f64 = 1e-12;
/// PSD checks accept eigenvalues down to minus this value.
pub const PSD_TOL: f64 = 1e-9;

/// Ordered list of distinct lattice sites.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SiteWindow {
    sites: Vec<Site>,
}

impl SiteWindow {
    pub fn new(sites: Vec<Site>) -> Result<Self> {
        let distinct: BTreeSet<&Site> = sites.iter().collect();
        if distinct.len() != sites.len() {
            return Err(Error::Config("window sites must be distinct".into()));
        }
        if let Some(d) = sites.first().map(Site::dim) {
            if sites.iter().any(|s| s.dim() != d) {
                return Err(Error::Config("window sites have mixed dimensions".into()));
            }
        }
        Ok(Self { sites })
    }

    /// Sorted window over the given sites.
    pub fn from_sites<'a>(sites: impl IntoIterator<Item = &'a Site>) -> Self {
        let set: BTreeSet<Site> = sites.into_iter().cloned().collect();
        Self { sites: set.into_iter().collect() }
    }

    /// All sites with `|s - centre|_inf <= radius`, sorted.
    pub fn cube(centre: &Site, radius: i64) -> Self {
        let d = centre.dim();
        let mut sites = Vec::new();
        let side = (2 * radius + 1) as usize;
        let total = side.pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut coords = vec![0i64; d];
            for c in coords.iter_mut().rev() {
                *c = (rem % side) as i64 - radius;
                rem /= side;
            }
            sites.push(centre.add(&Site::new(&coords)));
        }
        Self::from_sites(sites.iter())
    }

    /// Bounding box of `support`, widened by `pad` in every direction.
    pub fn padded_box(support: &BTreeSet<Site>, d: usize, pad: i64) -> Self {
        if support.is_empty() {
            return Self::cube(&Site::origin(d), pad);
        }
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        for s in support {
            for (i, c) in s.coords().iter().enumerate() {
                lo[i] = lo[i].min(*c - pad);
                hi[i] = hi[i].max(*c + pad);
            }
        }
        let mut sites = vec![Vec::new()];
        for i in 0..d {
            sites = sites
                .into_iter()
                .flat_map(|p: Vec<i64>| {
                    (lo[i]..=hi[i]).map(move |c| {
                        let mut q = p.clone();
                        q.push(c);
                        q
                    })
                })
                .collect();
        }
        let sites: Vec<Site> = sites.iter().map(|c| Site::new(c)).collect();
        Self::from_sites(sites.iter())
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.sites.contains(site)
    }

    pub fn index_of(&self, site: &Site) -> Option<usize> {
        self.sites.iter().position(|s| s == site)
    }

    pub fn translate(&self, k: &Site) -> Self {
        Self { sites: self.sites.iter().map(|s| s.add(k)).collect() }
    }

    /// Hilbert-space dimension `N^|Λ|`, or `None` on overflow.
    pub fn dim(&self, n: u32) -> Option<usize> {
        (n as usize).checked_pow(self.sites.len() as u32)
    }

    fn checked_dim(&self, n: u32) -> Result<usize> {
        match self.dim(n) {
            Some(d) if d <= MAX_DIM => Ok(d),
            _ => Err(Error::Size(format!("N^|Λ| for N={n}, |Λ|={} exceeds {MAX_DIM}", self.len()))),
        }
    }

    /// Exponents of `g` listed in window order.
    fn exponents(&self, g: &WeylLabel) -> Result<Vec<SiteExponent>> {
        let mut out = vec![SiteExponent::new(0, 0); self.len()];
        for (site, e) in g.entries() {
            let i = self.index_of(site).ok_or_else(|| self.window_error(g.support()))?;
            out[i] = *e;
        }
        Ok(out)
    }

    fn window_error<'a>(&self, support: impl Iterator<Item = &'a Site>) -> Error {
        let fmt = |v: Vec<String>| format!("{{{}}}", v.join("; "));
        Error::Window {
            support: fmt(support.map(|s| format!("({s})")).collect()),
            window: fmt(self.sites.iter().map(|s| format!("({s})")).collect()),
        }
    }
}

impl std::fmt::Display for SiteWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.sites.iter().map(|s| format!("({s})")).collect();
        write!(f, "{{{}}}", parts.join(" "))
    }
}

/// A dense matrix together with the window it acts on.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub window: SiteWindow,
    pub matrix: DMatrix<C64>,
}

impl DenseOperator {
    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.matrix - self.matrix.adjoint()).camax() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let n = self.matrix.nrows();
        (&self.matrix * self.matrix.adjoint() - DMatrix::identity(n, n)).camax() <= tol
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.matrix)
    }
}

/// The shift `U|j> = |j+1>` and clock `V = diag(omega^-j)`.
pub fn clock_shift_matrices(n: u32) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let params = AlgebraParams::new(n, 1)?;
    Ok((site_matrix(&params, SiteExponent::new(1, 0)), site_matrix(&params, SiteExponent::new(0, 1))))
}

/// `U^alpha V^beta` as an `N x N` matrix.
pub fn site_matrix(params: &AlgebraParams, e: SiteExponent) -> DMatrix<C64> {
    let n = params.n() as usize;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let row = (j + e.alpha as usize) % n;
        m[(row, j)] = params.omega_pow(-(e.beta as i64) * j as i64);
    }
    m
}

/// Column `j` of the Weyl string with per-position exponents `exps`: the
/// string maps `|j>` to `omega^phase |row>`.
fn string_column(n: u32, exps: &[SiteExponent], j: usize) -> (usize, i64) {
    let n = n as usize;
    let mut rem = j;
    let mut row = 0usize;
    let mut place = 1usize;
    let mut phase = 0i64;
    for e in exps.iter().rev() {
        let digit = rem % n;
        rem /= n;
        phase -= e.beta as i64 * digit as i64;
        row += ((digit + e.alpha as usize) % n) * place;
        place *= n;
    }
    (row, phase)
}

/// Dense matrix of `x` on `window`.
pub fn realize(x: &LocalOperator, window: &SiteWindow) -> Result<DenseOperator> {
    let params = x.params();
    let dim = window.checked_dim(params.n())?;
    let mut m = DMatrix::zeros(dim, dim);
    for (g, c) in x.terms() {
        let exps = window.exponents(g)?;
        for j in 0..dim {
            let (row, phase) = string_column(params.n(), &exps, j);
            m[(row, j)] += c * params.omega_pow(phase);
        }
    }
    Ok(DenseOperator { window: window.clone(), matrix: m })
}

/// All `N^(2|Λ|)` labels supported in `window`, in label order.
pub fn window_basis(params: &AlgebraParams, window: &SiteWindow) -> Vec<WeylLabel> {
    let per_site: Vec<SiteExponent> = SiteExponent::all(params.n()).collect();
    let mut labels = vec![Vec::new()];
    for site in window.sites() {
        labels = labels
            .into_iter()
            .flat_map(|entries: Vec<(Site, SiteExponent)>| {
                per_site.iter().map(move |e| {
                    let mut next = entries.clone();
                    next.push((site.clone(), *e));
                    next
                })
            })
            .collect();
    }
    let mut out: Vec<WeylLabel> = labels.into_iter().map(WeylLabel::from_entries).collect();
    out.sort();
    out
}

/// Expands a dense matrix on `window` in the `U_g` basis using
/// `c_g = Tr(U_g^* M) / dim`.
pub fn from_dense(params: AlgebraParams, window: &SiteWindow, m: &DMatrix<C64>) -> Result<LocalOperator> {
    let dim = window.checked_dim(params.n())?;
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::Size(format!("matrix is {}x{}, window needs {dim}", m.nrows(), m.ncols())));
    }
    let basis = window_basis(&params, window);
    let mut terms = Vec::with_capacity(basis.len());
    for g in basis {
        let exps = window.exponents(&g)?;
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..dim {
            let (row, phase) = string_column(params.n(), &exps, j);
            acc += params.omega_pow(-phase) * m[(row, j)];
        }
        terms.push((g, acc / dim as f64));
    }
    Ok(LocalOperator::from_terms(params, terms))
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Operator norm of `x`, realised on its own support.
pub fn operator_norm(x: &LocalOperator) -> f64 {
    let support = x.support();
    if support.is_empty() {
        return x.trace().norm();
    }
    let window = SiteWindow::from_sites(support.iter());
    let dense = realize(x, &window).expect("window built from the support");
    dense.norm()
}

/// Density matrix of a single-site state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpec {
    rho: DMatrix<C64>,
}

impl StateSpec {
    pub fn new(rho: DMatrix<C64>) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.nrows() < 2 {
            return Err(Error::State(format!("rho must be square with N >= 2, got {}x{}", rho.nrows(), rho.ncols())));
        }
        if (&rho - rho.adjoint()).camax() > MATRIX_TOL {
            return Err(Error::State("rho is not Hermitian".into()));
        }
        let tr = rho.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > MATRIX_TOL {
            return Err(Error::State(format!("trace of rho is {tr}, expected 1")));
        }
        let min = rho.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -MATRIX_TOL {
            return Err(Error::State(format!("rho has negative eigenvalue {min:e}")));
        }
        Ok(Self { rho })
    }

    pub fn maximally_mixed(n: u32) -> Self {
        let n = n as usize;
        Self { rho: DMatrix::identity(n, n) / C64::new(n as f64, 0.0) }
    }

    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        let v: Vec<C64> = probs.iter().map(|p| C64::new(*p, 0.0)).collect();
        Self::new(DMatrix::from_diagonal(&DVector::from_vec(v)))
    }

    pub fn n(&self) -> u32 {
        self.rho.nrows() as u32
    }

    pub fn rho(&self) -> &DMatrix<C64> {
        &self.rho
    }

    /// `phi(U^alpha V^beta) = Tr(rho U^alpha V^beta)`.
    pub fn expectation(&self, params: &AlgebraParams, e: SiteExponent) -> C64 {
        (&self.rho * site_matrix(params, e)).trace()
    }
}

/// Kraus operators `K_ij = sqrt(p_i) |v_i><j|` of the map
/// `x -> Tr(rho x) 1`, with `rho = sum_i p_i |v_i><v_i|`.
///
/// Eigenvalues below [`MATRIX_TOL`] are dropped, so a pure state gives `N`
/// operators and a full-rank state `N^2`.
pub fn state_kraus(state: &StateSpec) -> Vec<DMatrix<C64>> {
    let n = state.rho.nrows();
    let eig = state.rho.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = Vec::new();
    for i in order {
        let p = eig.eigenvalues[i];
        if p <= MATRIX_TOL {
            continue;
        }
        let mut v = eig.eigenvectors.column(i).into_owned();
        let pivot = v.iter().cloned().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        v *= pivot.conj() / pivot.norm();
        for j in 0..n {
            let mut k = DMatrix::zeros(n, n);
            for r in 0..n {
                k[(r, j)] = v[r] * p.sqrt();
            }
            out.push(k);
        }
    }
    out
}

/// Expands an `N x N` matrix placed on `site`.
pub fn site_operator(params: AlgebraParams, site: &Site, m: &DMatrix<C64>) -> Result<LocalOperator> {
    from_dense(params, &SiteWindow::from_sites(std::iter::once(site)), m)
}

/// How Kraus terms that straddle the window edge are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ClosureMode {
    /// Keep only translates whose support lies inside the window.
    #[default]
    Interior,
    /// Keep every translate meeting the window, dropping out-of-window factors.
    Clipped,
}

/// One dissipator `w (a^* x a - {a^* a, x} / 2)`.
#[derive(Clone, Debug)]
pub struct KrausTerm {
    pub weight: f64,
    pub op: LocalOperator,
}

/// A generator in matrix form over the full window basis.
#[derive(Clone, Debug)]
pub struct Superoperator {
    params: AlgebraParams,
    window: SiteWindow,
    basis: Vec<WeylLabel>,
    index: HashMap<WeylLabel, usize>,
    matrix: DMatrix<C64>,
}

impl Superoperator {
    /// Assembles `sum_t w_t (a_t^* X a_t - {a_t^* a_t, X} / 2)` densely and
    /// projects every image back onto the `U_g` basis.
    pub fn from_kraus_terms(params: AlgebraParams, window: &SiteWindow, terms: &[KrausTerm]) -> Result<Self> {
        let vec_dim = window
            .dim(params.n())
            .and_then(|d| d.checked_mul(d))
            .filter(|d| *d <= MAX_SUPEROP_DIM)
            .ok_or_else(|| Error::Size(format!("N^(2|Λ|) for |Λ| = {} exceeds {MAX_SUPEROP_DIM}", window.len())))?;
        let realized: Vec<(f64, DMatrix<C64>, DMatrix<C64>)> = terms
            .iter()
            .map(|t| {
                let a = realize(&t.op, window)?.matrix;
                let ad = a.adjoint();
                let ada = &ad * &a;
                Ok((t.weight, a, ada))
            })
            .collect::<Result<_>>()?;
        let basis = window_basis(&params, window);
        let index: HashMap<WeylLabel, usize> = basis.iter().cloned().enumerate().map(|(i, g)| (g, i)).collect();
        let mut matrix = DMatrix::zeros(vec_dim, vec_dim);
        for (col, g) in basis.iter().enumerate() {
            let x = realize(&LocalOperator::from_label(params, g.clone(), C64::new(1.0, 0.0)), window)?.matrix;
            let mut y = DMatrix::zeros(x.nrows(), x.ncols());
            for (w, a, ada) in &realized {
                let half = C64::new(0.5, 0.0);
                y += (a.adjoint() * &x * a - (ada * &x + &x * ada) * half) * C64::new(*w, 0.0);
            }
            let image = from_dense(params, window, &y)?;
            for (h, c) in image.terms() {
                matrix[(index[h], col)] = *c;
            }
        }
        Ok(Self { params, window: window.clone(), basis, index, matrix })
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

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn vectorize(&self, x: &LocalOperator) -> Result<DVector<C64>> {
        let mut v = DVector::zeros(self.basis.len());
        for (g, c) in x.terms() {
            let i = self.index.get(g).ok_or_else(|| self.window.window_error(g.support()))?;
            v[*i] = *c;
        }
        Ok(v)
    }

    pub fn devectorize(&self, v: &DVector<C64>) -> LocalOperator {
        LocalOperator::from_terms(self.params, self.basis.iter().cloned().zip(v.iter().cloned()))
    }

    pub fn apply(&self, x: &LocalOperator) -> Result<LocalOperator> {
        Ok(self.devectorize(&(&self.matrix * self.vectorize(x)?)))
    }

    /// `exp(t S)` on the vectorised space.
    pub fn propagator(&self, t: f64) -> Result<DMatrix<C64>> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("evolution time must be finite and >= 0, got {t}")));
        }
        Ok((&self.matrix * C64::new(t, 0.0)).exp())
    }

    /// `e^{tL} x` by scaling and squaring on the vectorised generator.
    pub fn expm_evolve(&self, t: f64, x: &LocalOperator) -> Result<LocalOperator> {
        let p = self.propagator(t)?;
        Ok(self.devectorize(&(p * self.vectorize(x)?)))
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        let ev = self.matrix.clone().schur().eigenvalues().expect("complex Schur form is triangular");
        let mut out: Vec<C64> = ev.iter().cloned().collect();
        out.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
        out
    }

    /// Smallest eigenvalue of the Choi matrix `sum_ij E_ij (x) e^{tL}(E_ij)`.
    pub fn choi_min_eigenvalue(&self, t: f64) -> Result<f64> {
        let p = self.propagator(t)?;
        let dim = self.window.checked_dim(self.params.n())?;
        let mut choi = DMatrix::zeros(dim * dim, dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let mut e = DMatrix::zeros(dim, dim);
                e[(i, j)] = C64::new(1.0, 0.0);
                let x = from_dense(self.params, &self.window, &e)?;
                let y = self.devectorize(&(&p * self.vectorize(&x)?));
                let ym = realize(&y, &self.window)?.matrix;
                choi.view_mut((i * dim, j * dim), (dim, dim)).copy_from(&ym);
            }
        }
        let herm = (&choi + choi.adjoint()) * C64::new(0.5, 0.0);
        Ok(herm.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
    }
}

/// Writes a matrix row-major, one row per line, entries as `re,im` pairs.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<C64>, mut out: W) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:?},{:?}", m[(r, c)].re, m[(r, c)].im)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn pauli_for_n2() {
        let (u, v) = clock_shift_matrices(2).unwrap();
        let sx = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let sz = DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]);
        assert_eq!(u, sx);
        assert_eq!(v, sz);
    }

    #[test]
    fn clock_shift_relations() {
        for n in 2..=5u32 {
            let (u, v) = clock_shift_matrices(n).unwrap();
            let w = AlgebraParams::new(n, 1).unwrap().omega();
            let id = DMatrix::<C64>::identity(n as usize, n as usize);
            assert!((&u * &v - &v * &u * w).camax() < 1e-14);
            let (mut un, mut vn) = (id.clone(), id.clone());
            for _ in 0..n {
                un = &un * &u;
                vn = &vn * &v;
            }
            assert!((un - &id).camax() < 1e-14);
            assert!((vn - &id).camax() < 1e-14);
            assert!((&u * u.adjoint() - &id).camax() < 1e-14);
        }
        assert!(clock_shift_matrices(1).is_err());
    }

    #[test]
    fn realize_xz() {
        let p = AlgebraParams::new(2, 1).unwrap();
        let x = LocalOperator::site_op(p, Site::origin(1), 1, 1);
        let m = realize(&x, &SiteWindow::from_sites([Site::origin(1)].iter())).unwrap().matrix;
        let want = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(-1., 0.), c(1., 0.), c(0., 0.)]);
        assert!((m - want).camax() < 1e-15);
    }

    #[test]
    fn realize_rejects_outside_support() {
        let p = AlgebraParams::new(2, 1).unwrap();
        let x = LocalOperator::site_op(p, Site::new(&[3]), 1, 0);
        let w = SiteWindow::from_sites([Site::origin(1)].iter());
        assert!(matches!(realize(&x, &w), Err(Error::Window { .. })));
    }

    #[test]
    fn norms() {
        let p = AlgebraParams::new(2, 1).unwrap();
        let s = Site::origin(1);
        let x = &LocalOperator::site_op(p, s.clone(), 1, 0) + &LocalOperator::site_op(p, s, 0, 1);
        assert!((operator_norm(&x) - 2f64.sqrt()).abs() < 1e-12);
        assert!((operator_norm(&LocalOperator::scalar(p, c(2., 0.))) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn from_dense_inverts_realize() {
        let p = AlgebraParams::new(3, 1).unwrap();
        let w = SiteWindow::from_sites([Site::new(&[0]), Site::new(&[1])].iter());
        let x = &LocalOperator::site_op(p, Site::new(&[0]), 1, 2).scale(c(0.3, -0.2))
            + &(&LocalOperator::site_op(p, Site::new(&[0]), 2, 0) * &LocalOperator::site_op(p, Site::new(&[1]), 1, 1));
        let y = from_dense(p, &w, &realize(&x, &w).unwrap().matrix).unwrap();
        assert!(x.approx_eq(&y, 1e-14));
    }

    #[test]
    fn kraus_maximally_mixed() {
        let st = StateSpec::maximally_mixed(2);
        let ks = state_kraus(&st);
        assert_eq!(ks.len(), 4);
        let p = AlgebraParams::new(2, 1).unwrap();
        let sz = site_matrix(&p, SiteExponent::new(0, 1));
        let sum: DMatrix<C64> = ks.iter().map(|k| k.adjoint() * &sz * k).sum();
        assert!(sum.camax() < 1e-14);
    }

    #[test]
    fn kraus_pure_state() {
        let st = StateSpec::diagonal(&[1.0, 0.0]).unwrap();
        let ks = state_kraus(&st);
        assert_eq!(ks.len(), 2);
        let k1 = DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
        let k2 = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!((&ks[0] - k1).camax() < 1e-14);
        assert!((&ks[1] - k2).camax() < 1e-14);
        let x = DMatrix::from_row_slice(2, 2, &[c(0.7, 0.), c(1., 2.), c(-3., 0.), c(5., 1.)]);
        let sum: DMatrix<C64> = ks.iter().map(|k| k.adjoint() * &x * k).sum();
        assert!((sum - DMatrix::identity(2, 2) * c(0.7, 0.)).camax() < 1e-14);
    }

    #[test]
    fn rejects_bad_states() {
        let bad_trace = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.), c(0.4, 0.)]));
        assert!(StateSpec::new(bad_trace).is_err());
        assert!(StateSpec::diagonal(&[1.2, -0.2]).is_err());
        let non_herm = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0.1, 0.), c(0., 0.), c(0.5, 0.)]);
        assert!(StateSpec::new(non_herm).is_err());
    }

    #[test]
    fn window_helpers() {
        let w = SiteWindow::cube(&Site::origin(2), 1);
        assert_eq!(w.len(), 9);
        let support: BTreeSet<Site> = [Site::new(&[0, 0]), Site::new(&[2, 0])].into_iter().collect();
        assert_eq!(SiteWindow::padded_box(&support, 2, 0).len(), 3);
        assert_eq!(SiteWindow::padded_box(&support, 2, 1).len(), 15);
        assert!(SiteWindow::new(vec![Site::origin(1), Site::origin(1)]).is_err());
    }

    #[test]
    fn csv_dump() {
        let m = DMatrix::from_row_slice(1, 2, &[c(1., 0.5), c(0., -2.)]);
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1.0,0.5,0.0,-2.0\n");
    }
}
