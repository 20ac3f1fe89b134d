//! Experiment files: TOML with fixed sections, validated before any run.
//!
//! ```toml
//! seed = 7
//!
//! [algebra]
//! n = 2
//! d = 1
//!
//! [generator]
//! kind = "translation_covariant"     # or "partial_state", "perturbed"
//! kraus = ["1 0 ; 0:1,0 1:0,1"]      # one operator text per Kraus member
//! rho = [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]   # rows of [re, im]
//! c = 0.05
//!
//! [observables]
//! x = ["1 0 ; 0:0,1"]
//! y = ["1 0 ; 0:1,0"]
//!
//! [vectors]
//! u = "1 0 ;"
//! v = "1 0 ;"
//!
//! [test_functions]
//! f = """
//! grid 1.0 4
//! 0 ; 0.5 0 ; 0.5 0 ; 0 0 ; 0 0
//! """
//!
//! [window]
//! radius = 1
//!
//! [time]
//! t_max = 2.0
//! steps = 8
//! ```

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::Deserialize;
use uhf_core::dense::{SiteWindow, StateSpec};
use uhf_core::fock::{parse_test_function, TestFunction};
use uhf_core::lindblad::{KrausFamily, Lindbladian};
use uhf_core::weyl::{parse_operator, AlgebraParams, LocalOperator, Site};
use uhf_core::C64;

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub algebra: AlgebraSection,
    pub generator: Option<GeneratorSection>,
    #[serde(default)]
    pub observables: ObservablesSection,
    #[serde(default)]
    pub vectors: VectorsSection,
    #[serde(default)]
    pub test_functions: TestFunctionsSection,
    pub window: Option<WindowSection>,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub ergodicity: ErgodicitySection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub lemma: LemmaSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraSection {
    pub n: u32,
    pub d: usize,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    TranslationCovariant,
    PartialState,
    Perturbed,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub kind: GeneratorKind,
    #[serde(default)]
    pub kraus: Vec<String>,
    pub rho: Option<Vec<Vec<[f64; 2]>>>,
    pub c: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesSection {
    #[serde(default)]
    pub x: Vec<String>,
    #[serde(default)]
    pub y: Vec<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorsSection {
    pub u: Option<String>,
    pub v: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionsSection {
    pub f: Option<String>,
    pub g: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub radius: Option<i64>,
    pub centre: Option<Vec<i64>>,
    pub sites: Option<Vec<Vec<i64>>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub grid: Option<Vec<f64>>,
    pub t_max: Option<f64>,
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Symbolic against dense or closed-form results.
    pub oracle: f64,
    /// Constancy of `P_t(1)` and `F_t(1)`.
    pub unitality: f64,
    /// Vacuum flow against semigroup matrix elements.
    pub vacuum: f64,
    /// Decay rate against its expected value.
    pub rate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { oracle: 1e-9, unitality: 1e-9, vacuum: 1e-8, rate: 1e-2 }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EvolveMethodName {
    Series,
    #[default]
    Ode,
    Exact,
    Oracle,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TruncationName {
    #[default]
    Open,
    Interior,
    Clipped,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub method: EvolveMethodName,
    pub truncation: TruncationName,
    /// Compare against the dense oracle on the window (interior truncation).
    pub cross_check: bool,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self { method: EvolveMethodName::Ode, truncation: TruncationName::Open, cross_check: true }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErgodicitySection {
    pub quad_panels: usize,
    pub quad_tol: f64,
    pub expected_rate: Option<f64>,
}

impl Default for ErgodicitySection {
    fn default() -> Self {
        Self { quad_panels: 1024, quad_tol: 1e-10, expected_rate: None }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethodName {
    #[default]
    Ode,
    Picard,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub method: FlowMethodName,
    pub picard_depth: Option<usize>,
    /// Lattice shift for the covariance verdict.
    pub covariance_shift: Option<Vec<i64>>,
    pub contraction: bool,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self { method: FlowMethodName::Ode, picard_depth: None, covariance_shift: None, contraction: true }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaSection {
    /// Derivation orders to check.
    pub orders: Vec<usize>,
    /// Random sign patterns per order and mode.
    pub instances: usize,
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self { orders: vec![1, 2, 3], instances: 4 }
    }
}

/// A validated experiment with every text field parsed.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub params: AlgebraParams,
    pub generator: Option<Lindbladian>,
    pub state: Option<StateSpec>,
    pub xs: Vec<LocalOperator>,
    pub ys: Vec<LocalOperator>,
    pub u: LocalOperator,
    pub v: LocalOperator,
    pub f: Option<TestFunction>,
    pub g: Option<TestFunction>,
    pub window: Option<SiteWindow>,
    pub grid: Vec<f64>,
    pub seed: u64,
}

fn cfg(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn operator(params: AlgebraParams, field: &str, text: &str) -> Result<LocalOperator, CliError> {
    parse_operator(params, text).map_err(|e| cfg(field, e))
}

fn state(n: u32, rows: &[Vec<[f64; 2]>]) -> Result<StateSpec, CliError> {
    let n = n as usize;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(cfg("generator.rho", format!("expected {n}x{n} entries")));
    }
    let m = DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1]));
    StateSpec::new(m).map_err(|e| cfg("generator.rho", e))
}

impl Experiment {
    pub fn from_config(config: ExperimentConfig, seed_override: Option<u64>) -> Result<Self, CliError> {
        let params = AlgebraParams::new(config.algebra.n, config.algebra.d).map_err(|e| cfg("algebra", e))?;
        let (generator, st) = match &config.generator {
            None => (None, None),
            Some(g) => {
                let st = match &g.rho {
                    Some(rows) => Some(state(params.n(), rows)?),
                    None => None,
                };
                let family = || -> Result<KrausFamily, CliError> {
                    if g.kraus.is_empty() {
                        return Err(cfg("generator.kraus", "at least one Kraus operator is required"));
                    }
                    let ops = g
                        .kraus
                        .iter()
                        .enumerate()
                        .map(|(i, t)| operator(params, &format!("generator.kraus[{i}]"), t))
                        .collect::<Result<Vec<_>, _>>()?;
                    KrausFamily::new(ops).map_err(|e| cfg("generator.kraus", e))
                };
                let need_state = || st.clone().ok_or_else(|| cfg("generator.rho", "required for this kind"));
                let l = match g.kind {
                    GeneratorKind::TranslationCovariant => Lindbladian::translation_covariant(family()?),
                    GeneratorKind::PartialState => {
                        Lindbladian::partial_state(params, need_state()?).map_err(|e| cfg("generator", e))?
                    }
                    GeneratorKind::Perturbed => {
                        let c = g.c.ok_or_else(|| cfg("generator.c", "required for kind = perturbed"))?;
                        Lindbladian::perturbed(params, need_state()?, family()?, c).map_err(|e| cfg("generator", e))?
                    }
                };
                (Some(l), st)
            }
        };
        let parse_list = |name: &str, list: &[String]| {
            list.iter()
                .enumerate()
                .map(|(i, t)| operator(params, &format!("observables.{name}[{i}]"), t))
                .collect::<Result<Vec<_>, _>>()
        };
        let xs = parse_list("x", &config.observables.x)?;
        let ys = parse_list("y", &config.observables.y)?;
        let one = LocalOperator::identity(params);
        let u = match &config.vectors.u {
            Some(t) => operator(params, "vectors.u", t)?,
            None => one.clone(),
        };
        let v = match &config.vectors.v {
            Some(t) => operator(params, "vectors.v", t)?,
            None => one,
        };
        let tf = |field: &str, t: &Option<String>| -> Result<Option<TestFunction>, CliError> {
            t.as_ref().map(|s| parse_test_function(params.d(), s).map_err(|e| cfg(field, e))).transpose()
        };
        let f = tf("test_functions.f", &config.test_functions.f)?;
        let g = tf("test_functions.g", &config.test_functions.g)?;
        let window = match &config.window {
            None => None,
            Some(w) => Some(window(params, w)?),
        };
        let grid = time_grid(&config.time)?;
        let seed = seed_override.or(config.seed).unwrap_or(0);
        Ok(Self { config, params, generator, state: st, xs, ys, u, v, f, g, window, grid, seed })
    }

    pub fn generator(&self) -> Result<&Lindbladian, CliError> {
        self.generator.as_ref().ok_or_else(|| cfg("generator", "section required by this command"))
    }
}

fn window(params: AlgebraParams, w: &WindowSection) -> Result<SiteWindow, CliError> {
    let d = params.d();
    let check = |field: &str, c: &[i64]| {
        if c.len() == d {
            Ok(Site::new(c))
        } else {
            Err(cfg(field, format!("expected {d} coordinates, got {}", c.len())))
        }
    };
    match (&w.sites, w.radius) {
        (Some(sites), None) => {
            let set = sites.iter().map(|c| check("window.sites", c)).collect::<Result<BTreeSet<_>, _>>()?;
            if set.is_empty() {
                return Err(cfg("window.sites", "empty window"));
            }
            Ok(SiteWindow::from_sites(&set))
        }
        (None, Some(r)) if r >= 0 => {
            let centre = match &w.centre {
                Some(c) => check("window.centre", c)?,
                None => Site::origin(d),
            };
            Ok(SiteWindow::cube(&centre, r))
        }
        (None, Some(_)) => Err(cfg("window.radius", "must be >= 0")),
        _ => Err(cfg("window", "give exactly one of `sites` or `radius`")),
    }
}

fn time_grid(t: &TimeSection) -> Result<Vec<f64>, CliError> {
    let grid = match (&t.grid, t.t_max) {
        (Some(g), None) => g.clone(),
        (None, Some(t_max)) => {
            let steps = t.steps.unwrap_or(10).max(1);
            (0..=steps).map(|i| t_max * i as f64 / steps as f64).collect()
        }
        (None, None) => vec![0.0, 0.5, 1.0],
        (Some(_), Some(_)) => return Err(cfg("time", "give either `grid` or `t_max`")),
    };
    if grid.is_empty() || grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(cfg("time", "times must be finite and >= 0"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(cfg("time", "grid must be sorted"));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[algebra]\nn = 2\nd = 1\n";

    #[test]
    fn minimal_config() {
        let e = Experiment::from_config(parse_config(MINIMAL).unwrap(), None).unwrap();
        assert_eq!(e.grid, vec![0.0, 0.5, 1.0]);
        assert!(e.generator.is_none());
    }

    #[test]
    fn unknown_field_rejected() {
        let err = parse_config("[algebra]\nn = 2\nd = 1\nq = 3\n").unwrap_err();
        assert!(err.to_string().contains("q"), "{err}");
    }

    #[test]
    fn bad_operator_names_field() {
        let text = format!("{MINIMAL}[observables]\nx = [\"1 0 ; 0:1\"]\n");
        let err = Experiment::from_config(parse_config(&text).unwrap(), None).unwrap_err();
        assert!(err.to_string().contains("observables.x[0]"), "{err}");
    }

    #[test]
    fn state_checked() {
        let text =
            format!("{MINIMAL}[generator]\nkind = \"partial_state\"\nrho = [[[2, 0], [0, 0]], [[0, 0], [-1, 0]]]\n");
        let err = Experiment::from_config(parse_config(&text).unwrap(), None).unwrap_err();
        assert!(err.to_string().contains("generator.rho"), "{err}");
    }

    #[test]
    fn window_and_grid() {
        let text = format!("{MINIMAL}[window]\nradius = 2\n[time]\nt_max = 1.0\nsteps = 4\n");
        let e = Experiment::from_config(parse_config(&text).unwrap(), Some(9)).unwrap();
        assert_eq!(e.window.unwrap().len(), 5);
        assert_eq!(e.grid.len(), 5);
        assert_eq!(e.seed, 9);
    }
}
