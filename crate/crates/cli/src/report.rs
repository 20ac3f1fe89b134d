use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// A named check with its measured value and threshold.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub threshold: f64,
    /// `<=` or `>=`, the sense in which `measured` is compared.
    pub relation: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    /// Passes when `measured <= threshold`.
    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), pass: measured <= threshold, measured, threshold, relation: "<=".into(), note: None }
    }

    /// Passes when `measured >= threshold`.
    pub fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), pass: measured >= threshold, measured, threshold, relation: ">=".into(), note: None }
    }

    /// A yes/no check recorded as `1` against threshold `1`.
    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            pass,
            measured: if pass { 1.0 } else { 0.0 },
            threshold: 1.0,
            relation: ">=".into(),
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub inputs_digest: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub verdicts: Vec<Verdict>,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, inputs: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            inputs_digest: digest(inputs),
            seed,
            outputs: Vec::new(),
            verdicts: Vec::new(),
            wall_time_s: 0.0,
            errors: Vec::new(),
        }
    }

    pub fn push(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }

    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.verdicts.iter().all(|v| v.pass)
    }
}

pub fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory with a `results/` subdirectory.
pub struct OutputDir {
    root: PathBuf,
    started: Instant,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root.join("results")).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), started: Instant::now() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `results/<name>` and records it in the report.
    pub fn write_result(&self, report: &mut RunReport, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let rel = format!("results/{name}");
        fs::write(self.root.join(&rel), bytes).map_err(|e| CliError::Io(format!("{rel}: {e}")))?;
        report.outputs.push(rel);
        Ok(())
    }

    pub fn finish(&self, report: &mut RunReport) -> Result<(), CliError> {
        report.wall_time_s = self.started.elapsed().as_secs_f64();
        let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(self.root.join("report.json"), json + "\n").map_err(|e| CliError::Io(format!("report.json: {e}")))
    }
}

/// Rows of named columns serialised as CSV.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// `{:?}` formatting, which round-trips `f64` exactly.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_senses() {
        assert!(Verdict::at_most("a", 1.0, 1.0).pass);
        assert!(!Verdict::at_most("a", 1.1, 1.0).pass);
        assert!(Verdict::at_least("a", 1.0, 0.5).pass);
        assert!(!Verdict::flag("a", false).pass);
    }

    #[test]
    fn table_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.row(vec!["1".into(), "x,y".into()]);
        assert_eq!(String::from_utf8(t.to_csv()).unwrap(), "a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
