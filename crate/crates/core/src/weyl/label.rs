use std::fmt;

use smallvec::SmallVec;

/// A lattice site in `Z^d`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site(SmallVec<[i64; 3]>);

impl Site {
    pub fn new(coords: &[i64]) -> Self {
        Site(SmallVec::from_slice(coords))
    }

    pub fn origin(d: usize) -> Self {
        Site(SmallVec::from_elem(0, d))
    }

    /// Unit vector along `axis`.
    pub fn unit(d: usize, axis: usize) -> Self {
        let mut s = Self::origin(d);
        s.0[axis] = 1;
        s
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, k: &Site) -> Site {
        Site(self.0.iter().zip(k.0.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, k: &Site) -> Site {
        Site(self.0.iter().zip(k.0.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> Site {
        Site(self.0.iter().map(|a| -a).collect())
    }

    /// Sup-norm distance from the origin.
    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).max().unwrap_or(0)
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Exponents `(alpha, beta)` of `U^alpha V^beta` on one site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteExponent {
    pub alpha: u32,
    pub beta: u32,
}

impl SiteExponent {
    pub const fn new(alpha: u32, beta: u32) -> Self {
        Self { alpha, beta }
    }

    pub fn is_identity(&self) -> bool {
        self.alpha == 0 && self.beta == 0
    }

    /// All `N^2` exponent pairs in `(alpha, beta)` lexicographic order.
    pub fn all(n: u32) -> impl Iterator<Item = SiteExponent> {
        (0..n).flat_map(move |a| (0..n).map(move |b| SiteExponent::new(a, b)))
    }
}

/// Finitely supported exponent map `g: Z^d -> Z_N x Z_N` labelling `U_g`.
///
/// Entries are kept sorted by site and never contain `(0, 0)`; the empty
/// label is the identity. The derived ordering is lexicographic on
/// `(site, alpha, beta)`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct WeylLabel(Vec<(Site, SiteExponent)>);

impl WeylLabel {
    pub fn identity() -> Self {
        WeylLabel(Vec::new())
    }

    pub fn single(site: Site, e: SiteExponent) -> Self {
        if e.is_identity() {
            Self::identity()
        } else {
            WeylLabel(vec![(site, e)])
        }
    }

    /// Builds a label from arbitrary entries; identity entries are removed.
    ///
    /// # Panics
    /// If a site is repeated.
    pub fn from_entries(mut entries: Vec<(Site, SiteExponent)>) -> Self {
        entries.retain(|(_, e)| !e.is_identity());
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for w in entries.windows(2) {
            assert!(w[0].0 != w[1].0, "repeated site {} in Weyl label", w[0].0);
        }
        WeylLabel(entries)
    }

    pub(crate) fn from_sorted(entries: Vec<(Site, SiteExponent)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|(_, e)| !e.is_identity()));
        WeylLabel(entries)
    }

    pub fn entries(&self) -> &[(Site, SiteExponent)] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    /// `|g|`, the number of sites carrying a nontrivial factor.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = &Site> {
        self.0.iter().map(|(s, _)| s)
    }

    pub fn exponent_at(&self, site: &Site) -> SiteExponent {
        match self.0.binary_search_by(|(s, _)| s.cmp(site)) {
            Ok(i) => self.0[i].1,
            Err(_) => SiteExponent::new(0, 0),
        }
    }

    pub fn translate(&self, k: &Site) -> WeylLabel {
        WeylLabel(self.0.iter().map(|(s, e)| (s.add(k), *e)).collect())
    }

    /// Keeps only the factors on sites accepted by `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(&Site) -> bool) -> WeylLabel {
        WeylLabel(self.0.iter().filter(|(s, _)| keep(s)).cloned().collect())
    }
}

impl fmt::Debug for WeylLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for WeylLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, (s, e)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{s}:{},{}", e.alpha, e.beta)?;
        }
        Ok(())
    }
}
