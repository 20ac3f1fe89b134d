use std::collections::BTreeSet;

use super::{Channel, Lindbladian};
use crate::dense::operator_norm;
use crate::error::{Error, Result};
use crate::weyl::{c_const, theta, LocalOperator, Site};

/// Largest derivation order accepted by the bound enumerations.
pub const MAX_ORDER: usize = 3;
/// Largest number of leaves visited by one enumeration.
pub const MAX_LEAVES: usize = 200_000;

const CHANNEL: Channel = Channel { component: 0, member: 0 };

/// `(k_1..k_p; eps_1..eps_p)` with `eps = -1, 0, 1` selecting
/// `delta^+_k`, `L_k` and `delta_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndex {
    pub kbar: Vec<Site>,
    pub epsbar: Vec<i8>,
}

impl MultiIndex {
    pub fn new(kbar: Vec<Site>, epsbar: Vec<i8>) -> Result<Self> {
        if kbar.len() != epsbar.len() {
            return Err(Error::Config("multi-index sites and signs differ in length".into()));
        }
        check_eps(&epsbar)?;
        Ok(Self { kbar, epsbar })
    }

    pub fn len(&self) -> usize {
        self.kbar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kbar.is_empty()
    }
}

fn check_eps(eps: &[i8]) -> Result<()> {
    match eps.iter().find(|e| !(-1..=1).contains(*e)) {
        Some(e) => Err(Error::Config(format!("sign {e} not in {{-1, 0, 1}}"))),
        None => Ok(()),
    }
}

fn apply_one(l: &Lindbladian, k: &Site, eps: i8, x: &LocalOperator) -> LocalOperator {
    match eps {
        -1 => l.delta_dag(CHANNEL, k, x),
        0 => l.lind_k(k, x),
        _ => l.delta(CHANNEL, k, x),
    }
}

/// `delta(kbar, epsbar)(x) = delta^{eps_p}_{k_p} ... delta^{eps_1}_{k_1}(x)`.
pub fn multi_derivation(l: &Lindbladian, x: &LocalOperator, m: &MultiIndex) -> LocalOperator {
    m.kbar.iter().zip(&m.epsbar).fold(x.clone(), |acc, (k, e)| apply_one(l, k, *e, &acc))
}

/// True when every translate of `r` commutes with `r` and `r^*`.
pub fn commuting_family(r: &LocalOperator) -> bool {
    let supp = r.support();
    let rd = r.adjoint();
    Lindbladian::contributing_shifts(&supp, &supp).iter().all(|k| {
        let rk = r.translate(k);
        r.commutator(&rk).max_coeff_diff(&LocalOperator::zero(r.params())) <= 1e-14
            && rd.commutator(&rk).max_coeff_diff(&LocalOperator::zero(r.params())) <= 1e-14
    })
}

fn require_single_r(l: &Lindbladian) -> Result<LocalOperator> {
    l.single_r().cloned().ok_or_else(|| Error::Config("a generator built from a single operator r is required".into()))
}

/// Largest coefficient of `L_{k_n}...L_{k_1}(x) - 2^-n sum_P R(kbar(P^c))^* delta(kbar, eps_P)(x) R(kbar(P))`
/// where `eps_P` is `-1` on `P` and `1` elsewhere.
pub fn leibniz_expansion_check(l: &Lindbladian, x: &LocalOperator, kbar: &[Site]) -> Result<f64> {
    require_single_r(l)?;
    let n = kbar.len();
    if n > 16 {
        return Err(Error::Size(format!("order {n} too large for subset expansion")));
    }
    let params = l.params();
    let lhs = kbar.iter().fold(x.clone(), |acc, k| l.lind_k(k, &acc));
    let r: Vec<LocalOperator> = kbar.iter().map(|k| l.noise_op(CHANNEL, k)).collect();
    let mut rhs = LocalOperator::zero(params);
    for mask in 0u32..(1 << n) {
        let in_p = |i: usize| mask & (1 << i) != 0;
        let eps: Vec<i8> = (0..n).map(|i| if in_p(i) { -1 } else { 1 }).collect();
        let d = multi_derivation(l, x, &MultiIndex { kbar: kbar.to_vec(), epsbar: eps });
        let mut right = LocalOperator::identity(params);
        let mut left = LocalOperator::identity(params);
        for (i, ri) in r.iter().enumerate() {
            if in_p(i) {
                right = &right * ri;
            } else {
                left = &left * ri;
            }
        }
        rhs = &rhs + &(&(&left.adjoint() * &d) * &right);
    }
    Ok(lhs.max_coeff_diff(&rhs.scale_re(0.5f64.powi(n as i32))))
}

/// Which estimate of the derivation lemma to evaluate.
#[derive(Clone, Debug)]
pub enum BoundMode {
    /// `sum ||delta(kbar, eps)(x)|| <= (2 theta_1(r) c_x)^n`, all `eps != 0`.
    Pure(Vec<i8>),
    /// As `Pure` with zeros allowed; the bound gains `||r||^p`, `p` = #zeros.
    Mixed(Vec<i8>),
    /// Derivations of a product of two derived operators.
    Product { y: LocalOperator, eps: Vec<i8>, eps1: Vec<i8>, eps2: Vec<i8> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Nonzero terms in the enumerated sum.
    pub terms: usize,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12)
    }
}

struct Enumerator<'a> {
    l: &'a Lindbladian,
    base: BTreeSet<Site>,
    leaves: usize,
}

impl Enumerator<'_> {
    /// All nonzero `delta(kbar, eps)(x)` over contributing `kbar`.
    fn collect(&mut self, x: &LocalOperator, eps: &[i8], out: &mut Vec<LocalOperator>) -> Result<()> {
        if x.is_zero() {
            return Ok(());
        }
        let Some((e, rest)) = eps.split_first() else {
            self.leaves += 1;
            if self.leaves > MAX_LEAVES {
                return Err(Error::Size(format!("enumeration exceeds {MAX_LEAVES} terms")));
            }
            out.push(x.clone());
            return Ok(());
        };
        for k in Lindbladian::contributing_shifts(&self.base, &x.support()) {
            self.collect(&apply_one(self.l, &k, *e, x), rest, out)?;
        }
        Ok(())
    }

    fn norm_sum(&mut self, x: &LocalOperator, eps: &[i8]) -> Result<(f64, usize)> {
        let mut leaves = Vec::new();
        self.collect(x, eps, &mut leaves)?;
        let terms = leaves.iter().filter(|v| !v.is_zero()).count();
        Ok((leaves.iter().map(operator_norm).sum(), terms))
    }
}

/// Enumerated left side and closed-form right side of the chosen estimate.
/// Translations are restricted to those meeting the current support, outside
/// of which every term vanishes.
pub fn lemma_bound_report(l: &Lindbladian, x: &LocalOperator, mode: &BoundMode) -> Result<BoundReport> {
    let r = require_single_r(l)?;
    let mut en = Enumerator { l, base: l.base_support(), leaves: 0 };
    let two_theta = 2.0 * theta(&r, 1);
    let norm_r = operator_norm(&r);
    let check_order = |eps: &[i8]| -> Result<()> {
        check_eps(eps)?;
        if eps.is_empty() || eps.len() > MAX_ORDER {
            return Err(Error::Config(format!("derivation order must be 1..={MAX_ORDER}, got {}", eps.len())));
        }
        Ok(())
    };
    match mode {
        BoundMode::Pure(eps) => {
            check_order(eps)?;
            if eps.contains(&0) {
                return Err(Error::Config("pure mode takes signs in {-1, 1}".into()));
            }
            let (lhs, terms) = en.norm_sum(x, eps)?;
            Ok(BoundReport { lhs, rhs: (two_theta * c_const(x)).powi(eps.len() as i32), terms })
        }
        BoundMode::Mixed(eps) => {
            check_order(eps)?;
            let p = eps.iter().filter(|e| **e == 0).count();
            let (lhs, terms) = en.norm_sum(x, eps)?;
            let rhs = norm_r.powi(p as i32) * (two_theta * c_const(x)).powi(eps.len() as i32);
            Ok(BoundReport { lhs, rhs, terms })
        }
        BoundMode::Product { y, eps, eps1, eps2 } => {
            check_order(eps)?;
            check_order(eps1)?;
            check_order(eps2)?;
            l.params().check_same(&y.params())?;
            let mut xs = Vec::new();
            en.collect(x, eps1, &mut xs)?;
            let mut ys = Vec::new();
            en.collect(y, eps2, &mut ys)?;
            let mut lhs = 0.0;
            let mut terms = 0;
            for a in &xs {
                for b in &ys {
                    let (s, t) = en.norm_sum(&(a * b), eps)?;
                    lhs += s;
                    terms += t;
                }
            }
            let (n, m1, m2) = (eps.len() as i32, eps1.len() as i32, eps2.len() as i32);
            let cxy = c_const(x).max(c_const(y));
            let rhs = 2f64.powi(n) * (1.0 + norm_r).powi(2 * n + m1 + m2) * (two_theta * cxy).powi(n + m1 + m2);
            Ok(BoundReport { lhs, rhs, terms })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::KrausFamily;
    use crate::weyl::AlgebraParams;
    use crate::C64;

    fn p2() -> AlgebraParams {
        AlgebraParams::new(2, 1).unwrap()
    }

    fn op(a: u32, b: u32, site: i64) -> LocalOperator {
        LocalOperator::site_op(p2(), Site::new(&[site]), a, b)
    }

    fn gen(r: LocalOperator) -> Lindbladian {
        Lindbladian::translation_covariant(KrausFamily::single(r))
    }

    #[test]
    fn single_step_is_lind_k() {
        let l = gen(op(1, 0, 0));
        let x = &op(0, 1, 0) + &op(1, 1, 1);
        let k = Site::new(&[1]);
        let m = MultiIndex::new(vec![k.clone()], vec![0]).unwrap();
        assert_eq!(multi_derivation(&l, &x, &m), l.lind_k(&k, &x));
    }

    #[test]
    fn composition_order() {
        let l = gen(&op(1, 0, 0) + &op(1, 1, 1).scale_re(0.5));
        let x = &op(0, 1, 0) * &op(1, 0, 1);
        let (k1, k2) = (Site::new(&[0]), Site::new(&[1]));
        let m = MultiIndex::new(vec![k1.clone(), k2.clone()], vec![1, -1]).unwrap();
        let manual = l.delta_dag(CHANNEL, &k2, &l.delta(CHANNEL, &k1, &x));
        assert_eq!(multi_derivation(&l, &x, &m), manual);
    }

    #[test]
    fn adjoint_flips_signs() {
        let l = gen(&op(1, 0, 0) + &op(0, 1, 0).scale(C64::new(0.0, 0.3)));
        let x = &op(1, 1, 0) + &op(0, 1, 1).scale(C64::new(0.2, -1.0));
        let k = vec![Site::new(&[0]), Site::new(&[1]), Site::new(&[0])];
        let m = MultiIndex::new(k.clone(), vec![1, 0, -1]).unwrap();
        let flipped = MultiIndex::new(k, vec![-1, 0, 1]).unwrap();
        let lhs = multi_derivation(&l, &x, &m).adjoint();
        assert!(lhs.approx_eq(&multi_derivation(&l, &x.adjoint(), &flipped), 1e-14));
    }

    #[test]
    fn leibniz_first_order_exact() {
        let l = gen(op(1, 0, 0));
        let x = &op(0, 1, 0) + &op(1, 1, 0);
        assert!(leibniz_expansion_check(&l, &x, &[Site::new(&[0])]).unwrap() <= 1e-15);
        let one = LocalOperator::identity(p2());
        assert_eq!(leibniz_expansion_check(&l, &one, &[Site::new(&[0]), Site::new(&[1])]).unwrap(), 0.0);
    }

    #[test]
    fn leibniz_second_order() {
        let w = op(1, 1, 0);
        let r = &(&w * &op(1, 1, 1)).scale_re(0.5) + &w.scale(C64::new(0.0, 0.7));
        let l = gen(r.clone());
        assert!(commuting_family(&r));
        let x = &op(0, 1, 0) * &op(1, 0, 1);
        for (a, b) in [(0, 0), (0, 1), (1, -1), (-1, 2)] {
            let d = leibniz_expansion_check(&l, &x, &[Site::new(&[a]), Site::new(&[b])]).unwrap();
            assert!(d <= 1e-12, "{d}");
        }
    }

    #[test]
    fn noncommuting_family_detected() {
        assert!(!commuting_family(&(&op(1, 0, 0) + &op(0, 1, 0).scale(C64::new(0.0, 1.0)))));
        assert!(!commuting_family(&(&op(1, 0, 0) * &op(0, 1, 1))));
        assert!(commuting_family(&op(1, 0, 0)));
    }

    #[test]
    fn pure_bound_example() {
        let l = gen(op(1, 0, 0));
        let rep = lemma_bound_report(&l, &op(0, 1, 0), &BoundMode::Pure(vec![1])).unwrap();
        assert!((rep.lhs - 2.0).abs() < 1e-12);
        assert!((rep.rhs - 4.0).abs() < 1e-12);
        assert_eq!(rep.terms, 1);
        let one = LocalOperator::identity(p2());
        let rep = lemma_bound_report(&l, &one, &BoundMode::Pure(vec![1, -1])).unwrap();
        assert_eq!(rep.lhs, 0.0);
    }

    #[test]
    fn mixed_and_product_hold() {
        let l = gen(op(1, 1, 0));
        let x = &op(0, 1, 0) + &op(1, 0, 1);
        let rep = lemma_bound_report(&l, &x, &BoundMode::Mixed(vec![0, 1])).unwrap();
        assert!(rep.holds(), "{rep:?}");
        let rep = lemma_bound_report(
            &l,
            &x,
            &BoundMode::Product { y: op(1, 0, 0), eps: vec![-1], eps1: vec![1], eps2: vec![0] },
        )
        .unwrap();
        assert!(rep.holds() && rep.lhs > 0.0, "{rep:?}");
    }

    #[test]
    fn bad_modes_rejected() {
        let l = gen(op(1, 0, 0));
        let x = op(0, 1, 0);
        assert!(lemma_bound_report(&l, &x, &BoundMode::Pure(vec![0])).is_err());
        assert!(lemma_bound_report(&l, &x, &BoundMode::Mixed(vec![1, 1, 1, 1])).is_err());
        assert!(lemma_bound_report(&l, &x, &BoundMode::Mixed(vec![2])).is_err());
    }
}
