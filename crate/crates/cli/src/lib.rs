//! Experiment runner behind the `lab` command: configuration, suites of
//! numerical checks, and report files.

pub mod config;
pub mod plot;
pub mod report;
pub mod suites;

use thiserror::Error;

use dirichlet_lab::counterexample::CounterexampleError;
use dirichlet_lab::fem::FemError;
use dirichlet_lab::meshing::MeshError;
use dirichlet_lab::norms::NormError;
use dirichlet_lab::GeometryError;

pub use config::{DomainSpec, ExperimentConfig, EXPERIMENTS};
pub use report::{emit_report, Check, Plot, RunResult, Table, Verdict};
pub use suites::{run_counterexample, run_experiment, run_inequality_suite, run_kernel_suite};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Counterexample(#[from] CounterexampleError),
}
