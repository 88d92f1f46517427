//! Verdicts, tables and the files written for them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skipped => "SKIP",
        }
    }
}

/// One named check with its measured numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub measured: Vec<(String, f64)>,
    pub note: String,
}

impl Check {
    pub fn judged(name: &str, ok: bool, measured: Vec<(&str, f64)>, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            measured: measured.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            note: note.into(),
        }
    }

    pub fn skipped(name: &str, reason: impl Into<String>) -> Self {
        Self { name: name.into(), verdict: Verdict::Skipped, measured: Vec::new(), note: reason.into() }
    }

    /// A check whose computation raised an error.
    pub fn errored(name: &str, err: &dyn std::fmt::Display) -> Self {
        Self { name: name.into(), verdict: Verdict::Fail, measured: Vec::new(), note: format!("error: {err}") }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.measured.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }
}

/// CSV table written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

/// SVG figure written as `<name>.svg`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub name: String,
    pub svg: String,
}

/// Outcome of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    /// Further text files `(file name, contents)`, such as meshes and solutions.
    pub files: Vec<(String, String)>,
}

impl RunResult {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self { config: config.clone(), checks: Vec::new(), tables: Vec::new(), plots: Vec::new(), files: Vec::new() }
    }

    /// No check failed; skipped checks do not count against the run.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn fmt_measured(c: &Check) -> String {
    c.measured.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect::<Vec<_>>().join(" ")
}

/// Plain-text verdict listing of all results.
pub fn summary_text(results: &[RunResult]) -> String {
    let mut s = String::new();
    let (mut pass, mut fail, mut skip) = (0, 0, 0);
    for r in results {
        let domain = if r.config.name == "counterexample" {
            format!("sawtooth k in {:?}", r.config.k_list)
        } else {
            r.config.domain_spec().label()
        };
        writeln!(s, "experiment {} (domain {domain}, seed {})", r.config.name, r.config.seed).unwrap();
        for c in &r.checks {
            match c.verdict {
                Verdict::Pass => pass += 1,
                Verdict::Fail => fail += 1,
                Verdict::Skipped => skip += 1,
            }
            write!(s, "  {} {}", c.verdict.label(), c.name).unwrap();
            let m = fmt_measured(c);
            if !m.is_empty() {
                write!(s, " {m}").unwrap();
            }
            if !c.note.is_empty() {
                write!(s, " ({})", c.note).unwrap();
            }
            s.push('\n');
        }
    }
    writeln!(s, "verdicts: {pass} pass, {fail} fail, {skip} skipped").unwrap();
    s
}

/// Writes every table, plot and config echo plus `summary.txt` into `outdir`;
/// returns the written paths in a fixed order.
pub fn emit_report(results: &[RunResult], outdir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(outdir)?;
    let mut paths = Vec::new();
    let mut write = |name: String, body: &str| -> Result<(), CliError> {
        let p = outdir.join(name);
        fs::write(&p, body)?;
        paths.push(p);
        Ok(())
    };
    for r in results {
        write(format!("{}.config.json", r.config.name), &r.config.to_json())?;
        for t in &r.tables {
            write(format!("{}.csv", t.name), &t.csv)?;
        }
        for p in &r.plots {
            write(format!("{}.svg", p.name), &p.svg)?;
        }
        for (name, body) in &r.files {
            write(name.clone(), body)?;
        }
    }
    write("summary.txt".into(), &summary_text(results))?;
    Ok(paths)
}
