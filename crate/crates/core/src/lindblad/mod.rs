//! Lindblad generators on the lattice and the semigroups they generate.
//!
//! A generator is a weighted list of Kraus families placed at the origin and
//! summed over all lattice translates:
//!
//! ```text
//! L(x) = sum_c w_c sum_k sum_l ( a_lk^* x a_lk - {a_lk^* a_lk, x} / 2 ),   a_lk = tau_k(a_l)
//! ```
//!
//! Only translates whose support meets `supp(x)` contribute, so every sum is
//! finite. Each `(component, member)` pair is a noise channel with
//! derivations `delta(x) = [x, r]` and `delta^+(x) = [r^*, x]` for
//! `r = sqrt(w) a_lk`.

mod ergodic;
mod evolve;
mod lemma;

pub use ergodic::{
    decay_rate_fit, ergodic_state, partial_semigroup_exact, perturbed_ergodic_state, DecayFit, PerturbedValue, QuadSpec,
};
pub use evolve::{evolve, EvolutionResult, EvolveMethod, EvolveOptions, Truncation};
pub use lemma::{
    commuting_family, leibniz_expansion_check, lemma_bound_report, multi_derivation, BoundMode, BoundReport, MultiIndex,
};

use std::collections::BTreeSet;

use crate::dense::{self, ClosureMode, KrausTerm, SiteWindow, StateSpec, Superoperator};
use crate::error::{Error, Result};
use crate::weyl::{AlgebraParams, LocalOperator, Site};
use crate::C64;

/// Symbolic tolerance for identities such as `sum a^* a = 1`.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Finite list of operators placed at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausFamily {
    ops: Vec<LocalOperator>,
    unital: bool,
}

impl KrausFamily {
    pub fn new(ops: Vec<LocalOperator>) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::Config("Kraus family is empty".into()))?;
        let params = first.params();
        let mut sum = LocalOperator::zero(params);
        for a in &ops {
            sum = sum.checked_add(&a.adjoint().checked_mul(a)?)?;
        }
        let unital = sum.approx_eq(&LocalOperator::identity(params), IDENTITY_TOL);
        Ok(Self { ops, unital })
    }

    /// Like [`KrausFamily::new`] but requires `sum a_l^* a_l = 1`.
    pub fn unital(ops: Vec<LocalOperator>) -> Result<Self> {
        let fam = Self::new(ops)?;
        if !fam.unital {
            return Err(Error::Config("Kraus family does not satisfy sum a^* a = 1".into()));
        }
        Ok(fam)
    }

    pub fn single(r: LocalOperator) -> Self {
        Self::new(vec![r]).expect("one operator")
    }

    /// The operators `K_ij` of [`dense::state_kraus`] placed at the origin.
    pub fn from_state(params: AlgebraParams, state: &StateSpec) -> Result<Self> {
        if state.n() != params.n() {
            return Err(Error::Config(format!("state is {0}x{0} but N = {1}", state.n(), params.n())));
        }
        let origin = Site::origin(params.d());
        let ops = dense::state_kraus(state)
            .iter()
            .map(|k| dense::site_operator(params, &origin, k))
            .collect::<Result<Vec<_>>>()?;
        Self::unital(ops)
    }

    pub fn ops(&self) -> &[LocalOperator] {
        &self.ops
    }

    pub fn is_unital(&self) -> bool {
        self.unital
    }

    pub fn params(&self) -> AlgebraParams {
        self.ops[0].params()
    }

    pub fn support(&self) -> BTreeSet<Site> {
        self.ops.iter().flat_map(|a| a.support()).collect()
    }
}

/// How the generator was specified.
#[derive(Clone, Debug, PartialEq)]
pub enum LindbladKind {
    TranslationCovariant,
    PartialState { state: StateSpec },
    Perturbed { state: StateSpec, c: f64 },
}

/// A noise channel: member `member` of component `component`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Channel {
    pub component: usize,
    pub member: usize,
}

#[derive(Clone, Debug)]
struct Component {
    weight: f64,
    family: KrausFamily,
    adj: Vec<LocalOperator>,
    ada: Vec<LocalOperator>,
}

impl Component {
    fn new(weight: f64, family: KrausFamily) -> Self {
        let adj: Vec<LocalOperator> = family.ops.iter().map(LocalOperator::adjoint).collect();
        let ada = adj.iter().zip(&family.ops).map(|(ad, a)| ad * a).collect();
        Self { weight, family, adj, ada }
    }
}

/// Translation-covariant Lindblad generator.
#[derive(Clone, Debug)]
pub struct Lindbladian {
    params: AlgebraParams,
    kind: LindbladKind,
    components: Vec<Component>,
}

impl Lindbladian {
    /// `L = sum_k tau_k L_0 tau_-k` with `L_0` built from `family`.
    pub fn translation_covariant(family: KrausFamily) -> Self {
        Self {
            params: family.params(),
            kind: LindbladKind::TranslationCovariant,
            components: vec![Component::new(1.0, family)],
        }
    }

    /// `L^phi(x) = sum_k (phi_k(x) - x)`.
    pub fn partial_state(params: AlgebraParams, state: StateSpec) -> Result<Self> {
        let family = KrausFamily::from_state(params, &state)?;
        Ok(Self { params, kind: LindbladKind::PartialState { state }, components: vec![Component::new(1.0, family)] })
    }

    /// `L^(c) = L^phi + c L_r`.
    pub fn perturbed(params: AlgebraParams, state: StateSpec, family: KrausFamily, c: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("perturbation weight must be >= 0, got {c}")));
        }
        params.check_same(&family.params())?;
        let phi = KrausFamily::from_state(params, &state)?;
        Ok(Self {
            params,
            kind: LindbladKind::Perturbed { state, c },
            components: vec![Component::new(1.0, phi), Component::new(c, family)],
        })
    }

    pub fn params(&self) -> AlgebraParams {
        self.params
    }

    pub fn kind(&self) -> &LindbladKind {
        &self.kind
    }

    pub fn state(&self) -> Option<&StateSpec> {
        match &self.kind {
            LindbladKind::TranslationCovariant => None,
            LindbladKind::PartialState { state } | LindbladKind::Perturbed { state, .. } => Some(state),
        }
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn component_weight(&self, i: usize) -> f64 {
        self.components[i].weight
    }

    pub fn family(&self, i: usize) -> &KrausFamily {
        &self.components[i].family
    }

    /// The same generator keeping only component `i` at unit weight.
    pub fn component_generator(&self, i: usize) -> Lindbladian {
        Lindbladian {
            params: self.params,
            kind: LindbladKind::TranslationCovariant,
            components: vec![Component::new(1.0, self.components[i].family.clone())],
        }
    }

    /// The single operator `r` when the generator is built from one.
    pub fn single_r(&self) -> Option<&LocalOperator> {
        match (&self.kind, self.components.as_slice()) {
            (LindbladKind::TranslationCovariant, [c]) if c.family.ops.len() == 1 && c.weight == 1.0 => {
                Some(&c.family.ops[0])
            }
            _ => None,
        }
    }

    /// Channels with nonzero weight, in deterministic order.
    pub fn channels(&self) -> Vec<Channel> {
        let mut out = Vec::new();
        for (ci, comp) in self.components.iter().enumerate() {
            if comp.weight == 0.0 {
                continue;
            }
            for mi in 0..comp.family.ops.len() {
                out.push(Channel { component: ci, member: mi });
            }
        }
        out
    }

    /// `r = sqrt(w) tau_k(a)` for the channel.
    pub fn noise_op(&self, ch: Channel, k: &Site) -> LocalOperator {
        let comp = &self.components[ch.component];
        comp.family.ops[ch.member].translate(k).scale_re(comp.weight.sqrt())
    }

    pub fn channel_support(&self, ch: Channel) -> BTreeSet<Site> {
        self.components[ch.component].family.ops[ch.member].support()
    }

    /// Union of the base supports of all weighted members.
    pub fn base_support(&self) -> BTreeSet<Site> {
        self.components.iter().filter(|c| c.weight != 0.0).flat_map(|c| c.family.support()).collect()
    }

    /// Largest sup-norm distance of a base-support site from the origin.
    pub fn kraus_radius(&self) -> i64 {
        self.base_support().iter().map(Site::sup_norm).max().unwrap_or(0)
    }

    /// Translations `k` with `(base + k) ∩ support != ∅`.
    pub fn contributing_shifts(base: &BTreeSet<Site>, support: &BTreeSet<Site>) -> BTreeSet<Site> {
        let mut out = BTreeSet::new();
        for s in support {
            for b in base {
                out.insert(s.sub(b));
            }
        }
        out
    }

    /// `delta_k(x) = [x, r_k]`.
    pub fn delta(&self, ch: Channel, k: &Site, x: &LocalOperator) -> LocalOperator {
        x.commutator(&self.noise_op(ch, k))
    }

    /// `delta_k^+(x) = [r_k^*, x]`.
    pub fn delta_dag(&self, ch: Channel, k: &Site, x: &LocalOperator) -> LocalOperator {
        self.noise_op(ch, k).adjoint().commutator(x)
    }

    fn dissipator(&self, comp: &Component, k: &Site, x: &LocalOperator, clip: Option<&SiteWindow>) -> LocalOperator {
        let mut acc = LocalOperator::zero(self.params);
        for m in 0..comp.family.ops.len() {
            let (a, ad, ada) = match clip {
                None => (comp.family.ops[m].translate(k), comp.adj[m].translate(k), comp.ada[m].translate(k)),
                Some(w) => {
                    let a = clip_to(&comp.family.ops[m].translate(k), w);
                    let ad = a.adjoint();
                    let ada = &ad * &a;
                    (a, ad, ada)
                }
            };
            let sandwich = &(&ad * x) * &a;
            let anti = ada.anticommutator(x).scale_re(0.5);
            acc = &acc + &(&sandwich - &anti);
        }
        acc.scale_re(comp.weight)
    }

    /// `L_0(x) = -{T(1), x}/2 + T(x)`.
    pub fn lind_zero(&self, x: &LocalOperator) -> LocalOperator {
        self.lind_k(&Site::origin(self.params.d()), x)
    }

    /// `L_0` in commutator form, `sum w ([a^*, x] a + a^* [x, a]) / 2`.
    pub fn lind_zero_commutator_form(&self, x: &LocalOperator) -> LocalOperator {
        let mut acc = LocalOperator::zero(self.params);
        for comp in &self.components {
            for (a, ad) in comp.family.ops.iter().zip(&comp.adj) {
                let t = &(&ad.commutator(x) * a) + &(ad * &x.commutator(a));
                acc = &acc + &t.scale_re(0.5 * comp.weight);
            }
        }
        acc
    }

    /// `L_k = tau_k L_0 tau_-k`.
    pub fn lind_k(&self, k: &Site, x: &LocalOperator) -> LocalOperator {
        let mut acc = LocalOperator::zero(self.params);
        for comp in self.components.iter().filter(|c| c.weight != 0.0) {
            acc = &acc + &self.dissipator(comp, k, x, None);
        }
        acc
    }

    /// `L(x) = sum_k L_k(x)` over the finitely many contributing `k`.
    pub fn lind_total(&self, x: &LocalOperator) -> LocalOperator {
        self.apply_truncated(x, None, Truncation::Open).0
    }

    /// Contribution of component `i` alone (weight included).
    pub fn component_total(&self, i: usize, x: &LocalOperator) -> LocalOperator {
        let comp = &self.components[i];
        let mut acc = LocalOperator::zero(self.params);
        if comp.weight == 0.0 {
            return acc;
        }
        for k in Self::contributing_shifts(&comp.family.support(), &x.support()) {
            acc = &acc + &self.dissipator(comp, &k, x, None);
        }
        acc
    }

    /// Applies the generator with the window treatment of `truncation`.
    /// Returns the image and the coefficient mass dropped outside `window`.
    pub fn apply_truncated(
        &self,
        x: &LocalOperator,
        window: Option<&SiteWindow>,
        truncation: Truncation,
    ) -> (LocalOperator, f64) {
        let support = x.support();
        let mut acc = LocalOperator::zero(self.params);
        for comp in self.components.iter().filter(|c| c.weight != 0.0) {
            let base = comp.family.support();
            for k in Self::contributing_shifts(&base, &support) {
                match (truncation, window) {
                    (Truncation::Interior, Some(w)) => {
                        if base.iter().all(|b| w.contains(&b.add(&k))) {
                            acc = &acc + &self.dissipator(comp, &k, x, None);
                        }
                    }
                    (Truncation::Clipped, Some(w)) => {
                        if base.iter().any(|b| w.contains(&b.add(&k))) {
                            acc = &acc + &self.dissipator(comp, &k, x, Some(w));
                        }
                    }
                    _ => acc = &acc + &self.dissipator(comp, &k, x, None),
                }
            }
        }
        match window {
            Some(w) => acc.split_by_support(|s| w.contains(s)),
            None => (acc, 0.0),
        }
    }

    /// The Kraus terms a dense realisation on `window` must include.
    pub fn kraus_terms(&self, window: &SiteWindow, mode: ClosureMode) -> Vec<KrausTerm> {
        let window_sites: BTreeSet<Site> = window.sites().iter().cloned().collect();
        let mut out = Vec::new();
        for comp in self.components.iter().filter(|c| c.weight != 0.0) {
            let base = comp.family.support();
            for k in Self::contributing_shifts(&base, &window_sites) {
                let inside = base.iter().all(|b| window.contains(&b.add(&k)));
                if !inside && mode == ClosureMode::Interior {
                    continue;
                }
                for a in &comp.family.ops {
                    let op = clip_to(&a.translate(&k), window);
                    out.push(KrausTerm { weight: comp.weight, op });
                }
            }
        }
        out
    }

    /// Dense generator matrix on `window`.
    pub fn superoperator(&self, window: &SiteWindow, mode: ClosureMode) -> Result<Superoperator> {
        Superoperator::from_kraus_terms(self.params, window, &self.kraus_terms(window, mode))
    }
}

/// Drops the out-of-window factors of every Weyl string.
fn clip_to(x: &LocalOperator, window: &SiteWindow) -> LocalOperator {
    x.map_labels(|g| (g.restrict(|s| window.contains(s)), C64::new(1.0, 0.0)))
}
