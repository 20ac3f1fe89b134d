use std::collections::{BTreeMap, BTreeSet};
use std::ops::{Add, Mul, Neg, Sub};

use super::{weyl_adjoint, weyl_mul, AlgebraParams, Site, SiteExponent, WeylLabel, COEFF_TOL};
use crate::dense;
use crate::error::Result;
use crate::C64;

/// Finite complex combination of Weyl strings, kept in canonical form.
#[derive(Clone, PartialEq)]
pub struct LocalOperator {
    params: AlgebraParams,
    terms: BTreeMap<WeylLabel, C64>,
}

impl LocalOperator {
    pub fn zero(params: AlgebraParams) -> Self {
        Self { params, terms: BTreeMap::new() }
    }

    pub fn identity(params: AlgebraParams) -> Self {
        Self::scalar(params, C64::new(1.0, 0.0))
    }

    pub fn scalar(params: AlgebraParams, c: C64) -> Self {
        Self::from_label(params, WeylLabel::identity(), c)
    }

    pub fn from_label(params: AlgebraParams, label: WeylLabel, c: C64) -> Self {
        Self::from_terms(params, std::iter::once((label, c)))
    }

    /// `U^alpha V^beta` placed on `site`.
    pub fn site_op(params: AlgebraParams, site: Site, alpha: u32, beta: u32) -> Self {
        let n = params.n();
        let e = SiteExponent::new(alpha % n, beta % n);
        Self::from_label(params, WeylLabel::single(site, e), C64::new(1.0, 0.0))
    }

    /// Sums the given terms, merging equal labels and dropping negligible
    /// coefficients.
    pub fn from_terms(params: AlgebraParams, terms: impl IntoIterator<Item = (WeylLabel, C64)>) -> Self {
        let mut map = BTreeMap::new();
        for (label, c) in terms {
            *map.entry(label).or_insert(C64::new(0.0, 0.0)) += c;
        }
        Self::finish(params, map)
    }

    fn finish(params: AlgebraParams, mut map: BTreeMap<WeylLabel, C64>) -> Self {
        map.retain(|_, c| c.norm() >= COEFF_TOL);
        Self { params, terms: map }
    }

    pub fn params(&self) -> AlgebraParams {
        self.params
    }

    pub fn terms(&self) -> impl Iterator<Item = (&WeylLabel, &C64)> {
        self.terms.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = &WeylLabel> {
        self.terms.keys()
    }

    pub fn coeff(&self, label: &WeylLabel) -> C64 {
        self.terms.get(label).copied().unwrap_or_default()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn support(&self) -> BTreeSet<Site> {
        self.terms.keys().flat_map(|g| g.support().cloned()).collect()
    }

    /// `|x|`, the cardinality of the support.
    pub fn support_size(&self) -> usize {
        self.support().len()
    }

    /// Sum of coefficient magnitudes; an upper bound for the operator norm.
    pub fn coeff_l1(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    /// Largest coefficient difference between two operators.
    pub fn max_coeff_diff(&self, other: &LocalOperator) -> f64 {
        let labels: BTreeSet<&WeylLabel> = self.terms.keys().chain(other.terms.keys()).collect();
        labels.into_iter().map(|g| (self.coeff(g) - other.coeff(g)).norm()).fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &LocalOperator, tol: f64) -> bool {
        self.params == other.params && self.max_coeff_diff(other) <= tol
    }

    pub fn scale(&self, c: C64) -> LocalOperator {
        Self::finish(self.params, self.terms.iter().map(|(g, v)| (g.clone(), v * c)).collect())
    }

    pub fn scale_re(&self, c: f64) -> LocalOperator {
        self.scale(C64::new(c, 0.0))
    }

    pub fn checked_add(&self, other: &LocalOperator) -> Result<LocalOperator> {
        self.params.check_same(&other.params)?;
        let mut map = self.terms.clone();
        for (g, c) in &other.terms {
            *map.entry(g.clone()).or_insert(C64::new(0.0, 0.0)) += c;
        }
        Ok(Self::finish(self.params, map))
    }

    /// Exact product, the bilinear extension of [`weyl_mul`].
    pub fn checked_mul(&self, other: &LocalOperator) -> Result<LocalOperator> {
        self.params.check_same(&other.params)?;
        let mut map = BTreeMap::new();
        for (g, a) in &self.terms {
            for (h, b) in &other.terms {
                let (phase, label) = weyl_mul(&self.params, g, h);
                let c = a * b * self.params.omega_pow(phase as i64);
                *map.entry(label).or_insert(C64::new(0.0, 0.0)) += c;
            }
        }
        Ok(Self::finish(self.params, map))
    }

    pub fn adjoint(&self) -> LocalOperator {
        Self::from_terms(
            self.params,
            self.terms.iter().map(|(g, c)| {
                let (phase, label) = weyl_adjoint(&self.params, g);
                (label, c.conj() * self.params.omega_pow(phase as i64))
            }),
        )
    }

    /// `[self, other] = self * other - other * self`.
    pub fn commutator(&self, other: &LocalOperator) -> LocalOperator {
        let mut map = BTreeMap::new();
        for (g, a) in &self.terms {
            for (h, b) in &other.terms {
                if !supports_overlap(g, h) {
                    continue;
                }
                let (p1, l1) = weyl_mul(&self.params, g, h);
                let (p2, _) = weyl_mul(&self.params, h, g);
                if p1 == p2 {
                    continue;
                }
                let c = a * b * (self.params.omega_pow(p1 as i64) - self.params.omega_pow(p2 as i64));
                *map.entry(l1).or_insert(C64::new(0.0, 0.0)) += c;
            }
        }
        Self::finish(self.params, map)
    }

    pub fn anticommutator(&self, other: &LocalOperator) -> LocalOperator {
        &(self * other) + &(other * self)
    }

    /// Lattice translation `tau_k`.
    pub fn translate(&self, k: &Site) -> LocalOperator {
        Self { params: self.params, terms: self.terms.iter().map(|(g, c)| (g.translate(k), *c)).collect() }
    }

    /// Normalised trace: the coefficient of the identity label.
    pub fn trace(&self) -> C64 {
        self.coeff(&WeylLabel::identity())
    }

    /// Splits into the part supported inside the accepted sites and the
    /// coefficient mass of everything else.
    pub fn split_by_support(&self, mut inside: impl FnMut(&Site) -> bool) -> (LocalOperator, f64) {
        let mut kept = BTreeMap::new();
        let mut leaked = 0.0;
        for (g, c) in &self.terms {
            if g.support().all(&mut inside) {
                kept.insert(g.clone(), *c);
            } else {
                leaked += c.norm();
            }
        }
        (Self { params: self.params, terms: kept }, leaked)
    }

    /// Applies `f` to every label, summing coefficients of coinciding images.
    pub fn map_labels(&self, mut f: impl FnMut(&WeylLabel) -> (WeylLabel, C64)) -> LocalOperator {
        Self::from_terms(
            self.params,
            self.terms.iter().map(|(g, c)| {
                let (h, w) = f(g);
                (h, c * w)
            }),
        )
    }
}

fn supports_overlap(g: &WeylLabel, h: &WeylLabel) -> bool {
    let (a, b) = (g.entries(), h.entries());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

impl std::fmt::Debug for LocalOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (g, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.6}{:+.6}i)[{g}]", c.re, c.im)?;
        }
        Ok(())
    }
}

impl Add for &LocalOperator {
    type Output = LocalOperator;
    fn add(self, rhs: &LocalOperator) -> LocalOperator {
        self.checked_add(rhs).expect("algebra parameter mismatch")
    }
}

impl Sub for &LocalOperator {
    type Output = LocalOperator;
    fn sub(self, rhs: &LocalOperator) -> LocalOperator {
        self.checked_add(&-rhs).expect("algebra parameter mismatch")
    }
}

impl Mul for &LocalOperator {
    type Output = LocalOperator;
    fn mul(self, rhs: &LocalOperator) -> LocalOperator {
        self.checked_mul(rhs).expect("algebra parameter mismatch")
    }
}

impl Neg for &LocalOperator {
    type Output = LocalOperator;
    fn neg(self) -> LocalOperator {
        self.scale_re(-1.0)
    }
}

/// A local operator viewed as a vector of the GNS space `L^2(A, tr)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GnsVector(pub LocalOperator);

impl GnsVector {
    /// `<u, v> = tr(u^* v)`, computed from the orthonormality of the `U_g`.
    pub fn inner(&self, other: &GnsVector) -> C64 {
        self.0.terms().map(|(g, a)| a.conj() * other.0.coeff(g)).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.terms().map(|(_, c)| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// `theta_n(x) = sum_g |c_g| |g|^n`.
pub fn theta(x: &LocalOperator, n: u32) -> f64 {
    x.terms().map(|(g, c)| c.norm() * (g.len() as f64).powi(n as i32)).sum()
}

/// `c_x = |x| (1 + sum_h |c_h|)`.
pub fn c_const(x: &LocalOperator) -> f64 {
    x.support_size() as f64 * (1.0 + x.coeff_l1())
}

/// Which reading of the commutator family entering `||x||_1` to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SeminormVariant {
    /// `sigma_{j;a,b}(x) = [(U^(j))^a (V^(j))^b, x]`, `(a, b) != (0, 0)`.
    #[default]
    Exponentiated,
    /// `sigma_{j;a,b}(x) = [U^(j) V^(j), x]` for every `(a, b)`, as printed.
    Printed,
}

/// `||x||_1 = sum_{j;a,b} ||sigma_{j;a,b}(x)||` with operator norms taken on
/// dense realisations. Only `j` in the support of `x` can contribute.
pub fn seminorm_one(x: &LocalOperator, variant: SeminormVariant) -> f64 {
    let params = x.params();
    let n = params.n();
    let mut total = 0.0;
    for site in x.support() {
        match variant {
            SeminormVariant::Exponentiated => {
                for e in SiteExponent::all(n).filter(|e| !e.is_identity()) {
                    let w = LocalOperator::site_op(params, site.clone(), e.alpha, e.beta);
                    total += dense::operator_norm(&w.commutator(x));
                }
            }
            SeminormVariant::Printed => {
                let w = LocalOperator::site_op(params, site.clone(), 1, 1);
                total += (n * n) as f64 * dense::operator_norm(&w.commutator(x));
            }
        }
    }
    total
}
