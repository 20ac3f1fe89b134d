//! Line-oriented text form of a [`LocalOperator`]:
//!
//! ```text
//! # comment
//! 0.5 0 ; 0:1,0 1:0,1
//! 1 0 ;
//! ```
//!
//! Each line is `re im ; site:alpha,beta ...` where a site is a comma
//! separated coordinate tuple. An empty site list is the identity.

use super::{AlgebraParams, LocalOperator, Site, SiteExponent, WeylLabel};
use crate::error::{Error, Result};
use crate::C64;

pub fn parse_operator(params: AlgebraParams, text: &str) -> Result<LocalOperator> {
    let mut terms = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let (coeff, sites) = line.split_once(';').ok_or_else(|| err("expected `re im ; sites`".into()))?;
        let nums: Vec<&str> = coeff.split_whitespace().collect();
        if nums.len() != 2 {
            return Err(err(format!("expected two coefficient fields, found {}", nums.len())));
        }
        let re: f64 = nums[0].parse().map_err(|_| err(format!("bad number `{}`", nums[0])))?;
        let im: f64 = nums[1].parse().map_err(|_| err(format!("bad number `{}`", nums[1])))?;
        let mut entries: Vec<(Site, SiteExponent)> = Vec::new();
        for tok in sites.split_whitespace() {
            let (coords, exps) = tok.split_once(':').ok_or_else(|| err(format!("factor `{tok}` lacks `:`")))?;
            let coords: Vec<i64> = coords
                .split(',')
                .map(|c| c.trim().parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(format!("bad site `{coords}`")))?;
            if coords.len() != params.d() {
                return Err(err(format!("site `{tok}` has {} coordinates, expected {}", coords.len(), params.d())));
            }
            let ab: Vec<u32> = exps
                .split(',')
                .map(|c| c.trim().parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(format!("bad exponents `{exps}`")))?;
            if ab.len() != 2 || ab[0] >= params.n() || ab[1] >= params.n() {
                return Err(err(format!("exponents `{exps}` must be two integers below {}", params.n())));
            }
            let site = Site::new(&coords);
            if entries.iter().any(|(s, _)| *s == site) {
                return Err(err(format!("site {site} repeated")));
            }
            entries.push((site, SiteExponent::new(ab[0], ab[1])));
        }
        terms.push((WeylLabel::from_entries(entries), C64::new(re, im)));
    }
    Ok(LocalOperator::from_terms(params, terms))
}

/// Writes one line per term in canonical label order; floats use the
/// shortest representation that parses back to the same value.
pub fn write_operator(x: &LocalOperator) -> String {
    let mut out = String::new();
    for (g, c) in x.terms() {
        out.push_str(&format!("{:?} {:?} ;", c.re, c.im));
        for (s, e) in g.entries() {
            out.push_str(&format!(" {s}:{},{}", e.alpha, e.beta));
        }
        out.push('\n');
    }
    out
}
