//! Exact algebra of local observables on the `Z^d` lattice.
//!
//! Every local observable is a finite linear combination of Weyl strings
//! `U_g = prod_j (U^(j))^alpha_j (V^(j))^beta_j`, where `U` (shift) and `V`
//! (clock) satisfy `U^N = V^N = 1` and `UV = omega VU`. Products are kept in
//! normal order (all `U` powers left of `V` powers on each site), which fixes
//! the cocycle of the projective representation:
//!
//! ```text
//! U^a V^b * U^c V^d = omega^(-b c) U^(a+c) V^(b+d)
//! ```

mod label;
mod operator;
mod text;

pub use label::{Site, SiteExponent, WeylLabel};
pub use operator::{c_const, seminorm_one, theta, GnsVector, LocalOperator, SeminormVariant};
pub use text::{parse_operator, write_operator};

use std::collections::HashSet;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::C64;

/// Coefficients below this magnitude are dropped during canonicalisation.
pub const COEFF_TOL: f64 = 1e-15;

/// On-site dimension `N` and lattice dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AlgebraParams {
    n: u32,
    d: usize,
}

impl AlgebraParams {
    pub fn new(n: u32, d: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("on-site dimension must be >= 2, got {n}")));
        }
        if d < 1 {
            return Err(Error::Config("lattice dimension must be >= 1".into()));
        }
        let params = Self { n, d };
        verify_phase_convention(&params)?;
        Ok(params)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// The primitive root `omega = exp(2 pi i / N)`.
    pub fn omega(&self) -> C64 {
        self.omega_pow(1)
    }

    /// `omega^k` for any integer `k`, exact on quarter turns.
    pub fn omega_pow(&self, k: i64) -> C64 {
        root_of_unity(k, self.n)
    }

    pub(crate) fn check_same(&self, other: &AlgebraParams) -> Result<()> {
        if self != other {
            return Err(Error::Config(format!(
                "algebra parameter mismatch: (N={}, d={}) vs (N={}, d={})",
                self.n, self.d, other.n, other.d
            )));
        }
        Ok(())
    }
}

/// `exp(2 pi i k / n)` with exact values at multiples of a quarter turn, so
/// that `N = 2` and `N = 4` phases stay purely real or imaginary.
pub fn root_of_unity(k: i64, n: u32) -> C64 {
    let n = n as i64;
    let k = k.rem_euclid(n);
    if (4 * k) % n == 0 {
        return match (4 * k) / n {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
    }
    C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)
}

/// Checks [`weyl_mul`] against the dense clock/shift matrices for every
/// pair of single-site strings. Runs once per `N`.
fn verify_phase_convention(params: &AlgebraParams) -> Result<()> {
    static VERIFIED: OnceLock<Mutex<HashSet<u32>>> = OnceLock::new();
    let cache = VERIFIED.get_or_init(|| Mutex::new(HashSet::new()));
    if cache.lock().unwrap().contains(&params.n) {
        return Ok(());
    }
    let site = Site::origin(params.d);
    for a in SiteExponent::all(params.n) {
        for b in SiteExponent::all(params.n) {
            let (phase, label) =
                weyl_mul(params, &WeylLabel::single(site.clone(), a), &WeylLabel::single(site.clone(), b));
            let lhs = crate::dense::site_matrix(params, a) * crate::dense::site_matrix(params, b);
            let rhs = crate::dense::site_matrix(params, label.exponent_at(&site)) * params.omega_pow(phase as i64);
            if (lhs - rhs).camax() > 1e-12 {
                return Err(Error::Internal(format!(
                    "Weyl product phase disagrees with clock/shift matrices for N={} at {a:?}*{b:?}",
                    params.n
                )));
            }
        }
    }
    cache.lock().unwrap().insert(params.n);
    Ok(())
}

/// Product of two Weyl strings: `U_g U_h = omega^phase U_label`.
///
/// Returns the phase exponent reduced into `0..N`.
pub fn weyl_mul(params: &AlgebraParams, g: &WeylLabel, h: &WeylLabel) -> (u32, WeylLabel) {
    let n = params.n;
    let mut phase: u64 = 0;
    let mut out = Vec::with_capacity(g.len() + h.len());
    let (a, b) = (g.entries(), h.entries());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take = match (a.get(i), b.get(j)) {
            (Some((sa, _)), Some((sb, _))) => sa.cmp(sb),
            (Some(_), None) => std::cmp::Ordering::Less,
            _ => std::cmp::Ordering::Greater,
        };
        match take {
            std::cmp::Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                let (site, x) = &a[i];
                let y = b[j].1;
                // V^beta U^alpha' = omega^(-beta alpha') U^alpha' V^beta
                phase += (n - (x.beta * y.alpha) % n) as u64 % n as u64;
                let e = SiteExponent::new((x.alpha + y.alpha) % n, (x.beta + y.beta) % n);
                if !e.is_identity() {
                    out.push((site.clone(), e));
                }
                i += 1;
                j += 1;
            }
        }
    }
    ((phase % n as u64) as u32, WeylLabel::from_sorted(out))
}

/// Adjoint of a single Weyl string: `U_g^* = omega^phase U_label`.
pub fn weyl_adjoint(params: &AlgebraParams, g: &WeylLabel) -> (u32, WeylLabel) {
    let n = params.n;
    let mut phase: u64 = 0;
    let entries = g
        .entries()
        .iter()
        .map(|(site, e)| {
            // (U^a V^b)^* = omega^(-a b) U^(-a) V^(-b)
            phase += ((n - (e.alpha * e.beta) % n) % n) as u64;
            (site.clone(), SiteExponent::new((n - e.alpha) % n, (n - e.beta) % n))
        })
        .collect();
    ((phase % n as u64) as u32, WeylLabel::from_sorted(entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2() -> AlgebraParams {
        AlgebraParams::new(2, 1).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(AlgebraParams::new(1, 1).is_err());
        assert!(AlgebraParams::new(2, 0).is_err());
    }

    #[test]
    fn omega_is_primitive() {
        for n in 2..=7 {
            let p = AlgebraParams::new(n, 1).unwrap();
            let w = p.omega();
            assert!((w.powu(n) - C64::new(1.0, 0.0)).norm() < 1e-14);
            for k in 1..n {
                assert!((w.powu(k) - C64::new(1.0, 0.0)).norm() > 1e-6);
            }
        }
    }

    #[test]
    fn x_times_z_needs_no_reorder() {
        let p = p2();
        let g = WeylLabel::single(Site::origin(1), SiteExponent::new(1, 0));
        let h = WeylLabel::single(Site::origin(1), SiteExponent::new(0, 1));
        let (phase, label) = weyl_mul(&p, &g, &h);
        assert_eq!(phase, 0);
        assert_eq!(label, WeylLabel::single(Site::origin(1), SiteExponent::new(1, 1)));
    }

    #[test]
    fn z_times_x_picks_up_sign() {
        let p = p2();
        let g = WeylLabel::single(Site::origin(1), SiteExponent::new(0, 1));
        let h = WeylLabel::single(Site::origin(1), SiteExponent::new(1, 0));
        let (phase, label) = weyl_mul(&p, &g, &h);
        assert_eq!(phase, 1);
        assert_eq!(label, WeylLabel::single(Site::origin(1), SiteExponent::new(1, 1)));
    }

    #[test]
    fn identity_is_neutral() {
        let p = p2();
        let g = WeylLabel::from_entries(vec![
            (Site::new(&[0]), SiteExponent::new(1, 1)),
            (Site::new(&[3]), SiteExponent::new(0, 1)),
        ]);
        assert_eq!(weyl_mul(&p, &g, &WeylLabel::identity()), (0, g.clone()));
        assert_eq!(weyl_mul(&p, &WeylLabel::identity(), &g), (0, g));
    }

    #[test]
    fn adjoint_of_xz() {
        let p = p2();
        let g = WeylLabel::single(Site::origin(1), SiteExponent::new(1, 1));
        let (phase, label) = weyl_adjoint(&p, &g);
        assert_eq!(phase, 1);
        assert_eq!(label, g);
    }
}
