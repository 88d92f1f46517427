//! Experiments behind the subcommands.

mod basic;
mod counterexample;
mod inequalities;
mod kernel;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dirichlet_lab::fem::{FeFunction, FeSpace, Jet};
use dirichlet_lab::geometry::Domain;
use dirichlet_lab::singular::{singular_harmonic, CornerFrame, CornerFunction};
use dirichlet_lab::Point2d;

use crate::config::ExperimentConfig;
use crate::report::{Check, RunResult};
use crate::CliError;

pub use basic::{run_mesh, run_norms, run_solve};
pub use counterexample::run_counterexample;
pub use inequalities::run_inequality_suite;
pub use kernel::run_kernel_suite;

/// Validates `cfg` and runs the experiment it names; `report` runs the
/// inequality, kernel and counter-example suites in that order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunResult>, CliError> {
    cfg.validate()?;
    Ok(match cfg.name.as_str() {
        "mesh" => vec![run_mesh(cfg)?],
        "solve" => vec![run_solve(cfg)?],
        "norms" => vec![run_norms(cfg)?],
        "inequalities" => vec![run_inequality_suite(cfg)?],
        "kernel" => vec![run_kernel_suite(cfg)?],
        "counterexample" => vec![run_counterexample(cfg)?],
        "report" => {
            let mut out = Vec::new();
            for name in ["inequalities", "kernel", "counterexample"] {
                let sub = ExperimentConfig { name: name.into(), ..cfg.clone() };
                out.extend(run_experiment(&sub)?);
            }
            out
        }
        other => return Err(CliError::Config(format!("unknown experiment `{other}`"))),
    })
}

/// Runs a check body, turning an error into a failed verdict.
pub(crate) fn guarded(name: &str, body: impl FnOnce() -> Result<Check, CliError>) -> Check {
    body().unwrap_or_else(|e| Check::errored(name, &e))
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coefficients uniform in [-1, 1]; boundary dofs are zeroed when `zero_trace` is set.
pub(crate) fn random_function(space: &Arc<FeSpace<f64>>, rng: &mut ChaCha8Rng, zero_trace: bool) -> FeFunction<f64> {
    let mut c: Vec<f64> = (0..space.dof_count()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    if zero_trace {
        for &i in space.boundary_dofs() {
            c[i] = 0.0;
        }
    }
    space.function(c).expect("coefficient count matches the space")
}

/// Least-squares slope of `ys` against `xs`.
pub(crate) fn lsq_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Relative change `|b - a| / |a|`.
pub(crate) fn drift(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs()
}

/// Index of the corner with the largest interior angle.
pub(crate) fn widest_corner(d: &Domain<f64>) -> (usize, f64) {
    d.corner_angles().iter().copied().fold((0, 0.0), |a, c| if c.1 > a.1 { c } else { a })
}

/// `r^α sin(αθ)` with `α = π/ω` at the widest corner.
pub(crate) fn corner_solution(d: &Domain<f64>) -> Result<CornerFunction<f64>, CliError> {
    let (i, omega) = widest_corner(d);
    let frame = CornerFrame::at_vertex(d, i).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(singular_harmonic(frame, PI / omega))
}

/// Jet of `Re((p - c)^n)`.
pub(crate) fn harmonic_polynomial(n: u32, c: Point2d, p: Point2d) -> Jet<f64> {
    let w = (p.x - c.x, p.y - c.y);
    let mul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let pow = |k: u32| (0..k).fold((1.0, 0.0), |acc, _| mul(acc, w));
    let v = pow(n);
    let d1 = if n >= 1 { let q = pow(n - 1); (n as f64 * q.0, n as f64 * q.1) } else { (0.0, 0.0) };
    let d2 = if n >= 2 {
        let q = pow(n - 2);
        let f = (n * (n - 1)) as f64;
        (f * q.0, f * q.1)
    } else {
        (0.0, 0.0)
    };
    // f(z) holomorphic: ∂x Re f = Re f', ∂y Re f = -Im f'
    Jet {
        value: v.0,
        grad: Point2d::new(d1.0, -d1.1),
        hess: [[d2.0, -d2.1], [-d2.1, -d2.0]],
    }
}

/// `sin(πx) sin(πy)` with derivatives.
pub(crate) fn sine_jet(p: Point2d) -> Jet<f64> {
    let (sx, cx) = (PI * p.x).sin_cos();
    let (sy, cy) = (PI * p.y).sin_cos();
    let pp = PI * PI;
    Jet {
        value: sx * sy,
        grad: Point2d::new(PI * cx * sy, PI * sx * cy),
        hess: [[-pp * sx * sy, pp * cx * cy], [pp * cx * cy, -pp * sx * sy]],
    }
}
