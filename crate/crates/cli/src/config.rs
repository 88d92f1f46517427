//! JSON experiment configuration.
//!
//! Every field is optional in the file; missing fields take the defaults of
//! [`ExperimentConfig::default`]. Unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dirichlet_lab::counterexample::CorrectionConfig;
use dirichlet_lab::geometry::{l_shape, make_sawtooth, unit_square, Domain};
use dirichlet_lab::SawtoothParams;

use crate::CliError;

/// Registered experiment names, one per subcommand.
pub const EXPERIMENTS: [&str; 7] = ["mesh", "solve", "norms", "inequalities", "kernel", "counterexample", "report"];

/// Test functions known to `solve` and `norms`.
pub const FUNCTIONS: [&str; 4] = ["sine", "x", "corner", "random"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainSpec {
    Square,
    Lshape,
    Sawtooth { k: u32 },
    /// Polygon file in the `polygon` text format.
    Polygon { path: PathBuf },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain<f64>, CliError> {
        Ok(match self {
            DomainSpec::Square => unit_square(),
            DomainSpec::Lshape => l_shape(),
            DomainSpec::Sawtooth { k } => make_sawtooth(SawtoothParams::new(*k)?)?,
            DomainSpec::Polygon { path } => Domain::from_polygon_file(&std::fs::read_to_string(path)?)?,
        })
    }

    pub fn label(&self) -> String {
        match self {
            DomainSpec::Square => "square".into(),
            DomainSpec::Lshape => "lshape".into(),
            DomainSpec::Sawtooth { k } => format!("sawtooth{k}"),
            DomainSpec::Polygon { path } => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "polygon".into()),
        }
    }
}

/// Mesh settings of the sawtooth correction problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionSettings {
    pub h_max: f64,
    pub elems_per_edge: usize,
    pub grading: f64,
    pub order: usize,
    pub quad_degree: usize,
    pub boundary_levels: usize,
    /// Also report the discrete Poincaré constant of each sawtooth mesh.
    pub poincare: bool,
}

impl Default for CorrectionSettings {
    fn default() -> Self {
        let c = CorrectionConfig::default();
        Self {
            h_max: c.h_max,
            elems_per_edge: c.elems_per_edge,
            grading: c.grading,
            order: c.order,
            quad_degree: c.quad_degree,
            boundary_levels: c.boundary_levels,
            poincare: c.poincare,
        }
    }
}

impl CorrectionSettings {
    pub fn to_core(&self) -> CorrectionConfig {
        CorrectionConfig {
            h_max: self.h_max,
            elems_per_edge: self.elems_per_edge,
            grading: self.grading,
            order: self.order,
            quad_degree: self.quad_degree,
            boundary_levels: self.boundary_levels,
            poincare: self.poincare,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment to run; set from the subcommand when empty.
    pub name: String,
    /// Domain; `None` picks the experiment default (L-shape for `kernel`, unit square otherwise).
    pub domain: Option<DomainSpec>,
    /// Lagrange order of the fine solves.
    pub order: usize,
    /// Mesh size of the fine solves (identities, `mesh`, `solve`).
    pub h: f64,
    /// Grading exponent of the `mesh` and `solve` triangulations; 1 is uniform.
    pub grading: f64,
    /// Mesh size of the coarse meshes used by dense norms, Grisvard and `norms`.
    pub coarse_h: f64,
    /// Initial mesh size of the convergence-rate study.
    pub rate_h: f64,
    /// Grading exponent of the graded rate study.
    pub rate_grading: f64,
    pub s_values: Vec<f64>,
    pub k_list: Vec<u32>,
    /// Polynomial degree of the volume quadrature; `None` uses `2 order + 2`.
    pub quad_degree: Option<usize>,
    /// Extra quadrature refinement levels toward the boundary.
    pub boundary_levels: usize,
    /// Number of random finite element functions.
    pub samples: usize,
    /// Test function of `solve` and `norms`.
    pub function: String,
    pub correction: CorrectionSettings,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub parallel: bool,
    /// Record wall-clock times in the blow-up table (breaks byte-identical output).
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            domain: None,
            order: 2,
            h: 1.0 / 64.0,
            grading: 1.0,
            coarse_h: 0.125,
            rate_h: 0.25,
            rate_grading: 0.5,
            s_values: vec![0.25, 0.5, 0.75],
            k_list: vec![2, 4, 8, 16],
            quad_degree: None,
            boundary_levels: 3,
            samples: 20,
            function: "sine".into(),
            correction: CorrectionSettings::default(),
            out_dir: PathBuf::from("lab-out"),
            seed: 0,
            parallel: false,
            timing: false,
        }
    }
}

fn bad(msg: String) -> CliError {
    CliError::Config(msg)
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Domain of the experiment, falling back to the experiment default.
    pub fn domain_spec(&self) -> DomainSpec {
        self.domain.clone().unwrap_or(if self.name == "kernel" { DomainSpec::Lshape } else { DomainSpec::Square })
    }

    pub fn quad_degree(&self) -> usize {
        self.quad_degree.unwrap_or(2 * self.order + 2)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !EXPERIMENTS.contains(&self.name.as_str()) {
            return Err(bad(format!("unknown experiment `{}`; expected one of {EXPERIMENTS:?}", self.name)));
        }
        if !(1..=2).contains(&self.order) {
            return Err(bad(format!("order must be 1 or 2, got {}", self.order)));
        }
        for (what, v) in [("h", self.h), ("coarse_h", self.coarse_h), ("rate_h", self.rate_h)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(bad(format!("{what} must lie in (0, 1], got {v}")));
            }
        }
        for (what, v) in [("grading", self.grading), ("rate_grading", self.rate_grading)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(bad(format!("{what} must lie in (0, 1], got {v}")));
            }
        }
        if self.s_values.is_empty() || self.s_values.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(bad(format!("s_values must be a non-empty list in [0, 1], got {:?}", self.s_values)));
        }
        if self.k_list.is_empty() || self.k_list.iter().any(|&k| k == 0 || k > 1024) {
            return Err(bad(format!("k_list entries must lie in 1..=1024, got {:?}", self.k_list)));
        }
        if self.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad(format!("k_list must be strictly increasing, got {:?}", self.k_list)));
        }
        if let Some(q) = self.quad_degree {
            if !(1..=20).contains(&q) {
                return Err(bad(format!("quad_degree must lie in 1..=20, got {q}")));
            }
        }
        if self.boundary_levels > 8 {
            return Err(bad(format!("boundary_levels must be at most 8, got {}", self.boundary_levels)));
        }
        if !(1..=1000).contains(&self.samples) {
            return Err(bad(format!("samples must lie in 1..=1000, got {}", self.samples)));
        }
        if !FUNCTIONS.contains(&self.function.as_str()) {
            return Err(bad(format!("unknown function `{}`; expected one of {FUNCTIONS:?}", self.function)));
        }
        let c = &self.correction;
        if !(c.h_max > 0.0 && c.h_max <= 1.0) || c.elems_per_edge == 0 || !(c.grading > 0.0) || !(1..=2).contains(&c.order) {
            return Err(bad(format!("invalid correction settings {c:?}")));
        }
        if let Some(DomainSpec::Sawtooth { k }) = self.domain {
            if k == 0 {
                return Err(bad("sawtooth k must be positive".into()));
            }
        }
        Ok(())
    }
}
