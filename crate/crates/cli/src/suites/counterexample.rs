//! Trace blow-up on sawtooth domains.

use dirichlet_lab::counterexample::blowup_study;

use crate::config::ExperimentConfig;
use crate::report::{Check, Plot, RunResult, Table};
use crate::CliError;

/// Largest admitted spread `(max - min) / max` of each interior norm across `k`.
pub const MAX_PAIR_SPREAD: f64 = 0.5;
/// Relative agreement of the measured boundary norm with the closed form.
pub const TRACE_TOL: f64 = 1e-8;

fn spread(xs: &[f64]) -> (f64, f64) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    ((max - min) / max, max / min)
}

pub fn run_counterexample(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let series = blowup_study(&cfg.k_list, &cfg.correction.to_core(), cfg.timing, cfg.parallel)?;
    let rows = &series.rows;
    let mut r = RunResult::new(cfg);

    let margin = rows.iter().map(|x| x.report.boundary_h1_w - x.bound).fold(f64::INFINITY, f64::min);
    r.checks.push(Check::judged("lower_bound", margin > 0.0, vec![("min_margin", margin)], "measured norm above (1/(2√2)) ln(-ln ε)"));

    let worst = rows
        .iter()
        .map(|x| (x.report.boundary_h1_w - x.trace_analytic).abs() / x.trace_analytic)
        .fold(0.0, f64::max);
    r.checks.push(Check::judged("trace_consistency", worst < TRACE_TOL, vec![("max_relative_gap", worst)], format!("bound {TRACE_TOL:e}")));

    if rows.len() < 2 {
        r.checks.push(Check::skipped("growth", "insufficient data"));
        r.checks.push(Check::skipped("bounded_pair", "insufficient data"));
    } else {
        let increasing = rows.windows(2).all(|w| w[1].report.boundary_h1_w > w[0].report.boundary_h1_w);
        r.checks.push(Check::judged("growth", increasing, vec![("slope", series.slope())], "strictly increasing in k"));
        let l2: Vec<f64> = rows.iter().map(|x| x.report.l2_w).collect();
        let wh2: Vec<f64> = rows.iter().map(|x| x.report.wh2_w).collect();
        let (sl, ql) = spread(&l2);
        let (sh, qh) = spread(&wh2);
        r.checks.push(Check::judged(
            "bounded_pair",
            sl < MAX_PAIR_SPREAD && sh < MAX_PAIR_SPREAD,
            vec![("spread_l2", sl), ("spread_wh2", sh), ("max_over_min_l2", ql), ("max_over_min_wh2", qh)],
            format!("spread (max - min)/max below {MAX_PAIR_SPREAD}"),
        ));
    }
    r.tables.push(Table { name: "blowup".into(), csv: series.to_csv() });
    r.plots.push(Plot { name: "blowup".into(), svg: series.to_svg() });
    Ok(r)
}
