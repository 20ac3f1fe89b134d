#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uhf_core::weyl::{AlgebraParams, LocalOperator, Site, SiteExponent, WeylLabel};
use uhf_core::C64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn p2(d: usize) -> AlgebraParams {
    AlgebraParams::new(2, d).unwrap()
}

pub fn site(coords: &[i64]) -> Site {
    Site::new(coords)
}

pub fn op(params: AlgebraParams, coords: &[i64], a: u32, b: u32) -> LocalOperator {
    LocalOperator::site_op(params, Site::new(coords), a, b)
}

pub fn coeff(rng: &mut impl Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Random Weyl string on a random subset of `sites`.
pub fn label(rng: &mut impl Rng, params: AlgebraParams, sites: &[Site]) -> WeylLabel {
    let n = params.n();
    let mut entries = Vec::new();
    for s in sites {
        if rng.random_bool(0.6) {
            entries.push((s.clone(), SiteExponent::new(rng.random_range(0..n), rng.random_range(0..n))));
        }
    }
    WeylLabel::from_entries(entries)
}

pub fn operator(rng: &mut impl Rng, params: AlgebraParams, sites: &[Site], terms: usize) -> LocalOperator {
    let pairs: Vec<_> = (0..terms).map(|_| (label(rng, params, sites), coeff(rng))).collect();
    LocalOperator::from_terms(params, pairs)
}

/// Sites `0..len` along the first axis.
pub fn line(d: usize, len: i64) -> Vec<Site> {
    (0..len)
        .map(|i| {
            let mut c = vec![0; d];
            c[0] = i;
            Site::new(&c)
        })
        .collect()
}

/// Random `r` built from powers of one fixed Weyl word, so all its
/// translates commute with each other and with their adjoints.
pub fn commuting_r(rng: &mut impl Rng, params: AlgebraParams, span: i64) -> LocalOperator {
    let n = params.n();
    let e = loop {
        let e = SiteExponent::new(rng.random_range(0..n), rng.random_range(0..n));
        if !e.is_identity() {
            break e;
        }
    };
    let sites = line(params.d(), span);
    let mut terms = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let mut entries: Vec<_> = sites.iter().filter(|_| rng.random_bool(0.6)).map(|s| (s.clone(), e)).collect();
        if entries.is_empty() {
            entries.push((sites[0].clone(), e));
        }
        terms.push((WeylLabel::from_entries(entries), coeff(rng)));
    }
    LocalOperator::from_terms(params, terms)
}
