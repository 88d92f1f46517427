use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dirichlet_lab_cli::{emit_report, run_experiment, ExperimentConfig, Verdict};

#[derive(Parser)]
#[command(name = "lab", version, about = "Numerical checks for Sobolev norms, corner singularities and sawtooth trace blow-up")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed of the random finite element functions.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run independent k values concurrently.
    #[arg(long, global = true)]
    parallel: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Triangulate the configured domain.
    Mesh,
    /// Solve a Poisson problem on the configured domain.
    Solve,
    /// Tabulate all norms of a test function.
    Norms,
    /// Sandwich, Hardy, trace, Rellich, Green and Nečas checks.
    Inequalities,
    /// Kernel dimensions, critical exponents, Grisvard and convergence rates.
    Kernel,
    /// Trace blow-up on sawtooth domains.
    Counterexample,
    /// Inequalities, kernel and counterexample in one report.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Mesh => "mesh",
            Command::Solve => "solve",
            Command::Norms => "norms",
            Command::Inequalities => "inequalities",
            Command::Kernel => "kernel",
            Command::Counterexample => "counterexample",
            Command::Report => "report",
        }
    }
}

fn run(cli: Cli) -> Result<bool, dirichlet_lab_cli::CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    let name = cli.command.name();
    if !cfg.name.is_empty() && cfg.name != name {
        return Err(dirichlet_lab_cli::CliError::Config(format!("config names experiment `{}` but the subcommand is `{name}`", cfg.name)));
    }
    cfg.name = name.into();
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.parallel |= cli.parallel;
    let results = run_experiment(&cfg)?;
    let paths = emit_report(&results, &cfg.out_dir)?;
    for r in &results {
        for c in &r.checks {
            println!("{} {}/{} {}", c.verdict.label(), r.config.name, c.name, c.note);
        }
    }
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(results.iter().all(|r| r.checks.iter().all(|c| c.verdict != Verdict::Fail)))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("lab: {e}");
            ExitCode::from(2)
        }
    }
}
