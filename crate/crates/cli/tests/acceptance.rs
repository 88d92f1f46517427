//! Acceptance criteria. Runs without the libtest harness so that the
//! PASS/FAIL lines are always printed.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dirichlet_lab::counterexample::{blowup_study, i_eps, CorrectionConfig, NecasField};
use dirichlet_lab::fem::{build_space, solve_dirichlet, Analytic, Jet, Source};
use dirichlet_lab::geometry::{l_shape, unit_square};
use dirichlet_lab::meshing::triangulate;
use dirichlet_lab::norms::{gagliardo_seminorm_sq, green_identity, rellich_identity, EdgeRule, GagliardoOptions, NormContext, SeminormPart};
use dirichlet_lab::singular::{critical_p, kernel_dimension, kernel_function, radial_divergence, singular_harmonic, w1p_membership, CornerFrame, CriticalP};
use dirichlet_lab::Point2d;
use dirichlet_lab_cli::{emit_report, run_counterexample, run_inequality_suite, run_kernel_suite, ExperimentConfig, RunResult};

const RELLICH_TOL: f64 = 1e-3;
const RELLICH_SECONDS: f64 = 60.0;
const GREEN_TOL: f64 = 1e-3;
const COUNTER_SECONDS: f64 = 600.0;
const PAIR_SPREAD: f64 = 0.5;
const SANDWICH_DRIFT: f64 = 0.2;
const SANDWICH_SECONDS: f64 = 900.0;
const SANDWICH_SAMPLES: usize = 20;
const GRAM_DOFS: usize = 3000;
const ROW_SLACK: f64 = 1e-12;
const GAGLIARDO_TOL: f64 = 0.02;
// Monte-Carlo estimate of ∬ |x1 - y1|² / |x - y|³ over the unit square,
// 10^7 samples, seed 20260101, recorded before the build; standard error 1.2257e-3
const MC_ORACLE: f64 = 1.485539616483376;
const THRESHOLD_BAND: f64 = 1e-3;
const DETECTOR_DECADES: usize = 12;
const HARMONIC_TOL: f64 = 1e-9;
const HARMONIC_POINTS: usize = 100;
const VALUE_TOL: f64 = 1e-12;
const UNIFORM_RATE: (f64, f64) = (0.57, 0.77);
const GRADED_RATE_MIN: f64 = 0.9;
const NECAS_TOL: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(json: &str) -> ExperimentConfig {
    let cfg = ExperimentConfig::from_json_str(json).expect("valid config");
    cfg.validate().expect("config passes validation");
    cfg
}

fn sine(p: Point2d) -> f64 {
    (PI * p.x).sin() * (PI * p.y).sin()
}

fn rellich() -> Outcome {
    let t = Instant::now();
    let space = build_space(Arc::new(triangulate(&unit_square(), 1.0 / 64.0, 1.0).unwrap()), 2).unwrap();
    let f = |p: Point2d| 2.0 * PI * PI * sine(p);
    let u = solve_dirichlet(&space, &Source::Function(&f), &|_| 0.0).unwrap();
    let ctx = NormContext::new(&space, 6, 3);
    let lap = |p: Point2d| -2.0 * PI * PI * sine(p);
    let id = rellich_identity(&ctx, &u, &lap, Point2d::new(0.5, 0.5), EdgeRule::Gauss(6)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    // (p - c)·n = 1/2 on every side and ∫_0^1 (π sin πt)² dt = π²/2
    let target = 4.0 * 0.5 * PI * PI / 2.0;
    let (el, er) = ((id.lhs - target).abs() / target, (id.rhs - target).abs() / target);
    outcome(
        el < RELLICH_TOL && er < RELLICH_TOL && secs < RELLICH_SECONDS,
        format!("lhs={:.8} rhs={:.8} target={target:.8} rel=({el:.2e}, {er:.2e}) < {RELLICH_TOL}; {secs:.1}s < {RELLICH_SECONDS}s", id.lhs, id.rhs),
    )
}

fn green() -> Outcome {
    let space = build_space(Arc::new(triangulate(&unit_square(), 1.0 / 64.0, 1.0).unwrap()), 2).unwrap();
    let f = |p: Point2d| 2.0 * PI * PI * sine(p);
    let phi = solve_dirichlet(&space, &Source::Function(&f), &|_| 0.0).unwrap();
    let ctx = NormContext::new(&space, 6, 3);
    let one = Analytic::new(|_p: Point2d| Jet { value: 1.0, ..Jet::zero() });
    let lap = |p: Point2d| -2.0 * PI * PI * sine(p);
    let id = green_identity(&ctx, &one, &phi, &lap, EdgeRule::Gauss(6)).unwrap();
    // ∫ Δφ = -2π² (2/π)²
    let target = -2.0 * PI * PI * (2.0 / PI) * (2.0 / PI);
    let (el, er) = ((id.lhs - target).abs(), (id.rhs - target).abs());
    outcome(el < GREEN_TOL && er < GREEN_TOL, format!("lhs={:.8} rhs={:.8} target={target:.8} abs=({el:.2e}, {er:.2e}) < {GREEN_TOL}", id.lhs, id.rhs))
}

fn spread(xs: &[f64]) -> (f64, f64, f64) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    ((max - min) / max, (max - min) / min, (max - min) / mean)
}

fn counterexample(first_csv: &mut Option<Vec<u8>>) -> Outcome {
    let t = Instant::now();
    let ks = [2, 4, 8, 16];
    let series = blowup_study(&ks, &CorrectionConfig::default(), false, false).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let mut lines = Vec::new();
    let mut above = true;
    for (row, &k) in series.rows.iter().zip(&ks) {
        let eps = 1.0 / (4.0 * k as f64);
        let bound = (-eps.ln()).ln() / (2.0 * 2f64.sqrt());
        above &= row.report.boundary_h1_w > bound;
        lines.push(format!("k={k} |w|={:.6} bound={bound:.6}", row.report.boundary_h1_w));
    }
    let increasing = series.rows.windows(2).all(|w| w[1].report.boundary_h1_w > w[0].report.boundary_h1_w);
    let l2: Vec<f64> = series.rows.iter().map(|r| r.report.l2_w).collect();
    let wh2: Vec<f64> = series.rows.iter().map(|r| r.report.wh2_w).collect();
    let (sl, sl_min, sl_mean) = spread(&l2);
    let (sh, sh_min, sh_mean) = spread(&wh2);
    *first_csv = Some(series.to_csv().into_bytes());
    outcome(
        above && increasing && sl < PAIR_SPREAD && sh < PAIR_SPREAD && secs < COUNTER_SECONDS,
        format!(
            "{}; increasing={increasing}; (max-min)/max l2={sl:.4} wh2={sh:.4} < {PAIR_SPREAD} [relative to min: {sl_min:.4}, {sh_min:.4}; to mean: {sl_mean:.4}, {sh_mean:.4}]; {secs:.1}s < {COUNTER_SECONDS}s",
            lines.join(", ")
        ),
    )
}

struct SandwichRow {
    s: f64,
    level: usize,
    dofs: usize,
    q: f64,
    dn: f64,
    w: f64,
}

fn parse_sandwich(csv: &str) -> Vec<SandwichRow> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            SandwichRow {
                s: f[0].parse().unwrap(),
                level: f[1].parse().unwrap(),
                dofs: f[2].parse().unwrap(),
                q: f[4].parse().unwrap(),
                dn: f[5].parse().unwrap(),
                w: f[6].parse().unwrap(),
            }
        })
        .collect()
}

fn sandwich() -> Outcome {
    let t = Instant::now();
    let cfg = config(r#"{"name": "inequalities", "domain": "lshape", "s_values": [0.25, 0.5, 0.75], "samples": 20, "seed": 0}"#);
    let res = run_inequality_suite(&cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let rows = parse_sandwich(&res.table("sandwich").unwrap().csv);
    let mut pass = secs < SANDWICH_SECONDS;
    let mut parts = Vec::new();
    for s in [0.25, 0.5, 0.75] {
        let mut c1 = [0.0f64; 2];
        let mut c2 = [0.0f64; 2];
        let mut rows_hold = true;
        for level in 0..2 {
            let set: Vec<&SandwichRow> = rows.iter().filter(|r| r.s == s && r.level == level).collect();
            pass &= set.len() == SANDWICH_SAMPLES && set.iter().all(|r| r.dofs <= GRAM_DOFS);
            c1[level] = set.iter().map(|r| r.q / r.dn).fold(0.0, f64::max);
            c2[level] = c1[level] * set.iter().map(|r| r.dn / r.w).fold(0.0, f64::max);
            rows_hold &= set.iter().all(|r| r.q <= c1[level] * r.dn * (1.0 + ROW_SLACK) && c1[level] * r.dn <= c2[level] * r.w * (1.0 + ROW_SLACK));
        }
        let d1 = (c1[1] - c1[0]).abs() / c1[0];
        let d2 = (c2[1] - c2[0]).abs() / c2[0];
        pass &= rows_hold && d1 < SANDWICH_DRIFT && d2 < SANDWICH_DRIFT;
        parts.push(format!("s={s}: C1 {:.4}->{:.4} ({d1:.3}), C2 {:.4}->{:.4} ({d2:.3}), rows={rows_hold}", c1[0], c1[1], c2[0], c2[1]));
    }
    let dofs = rows.iter().map(|r| r.dofs).max().unwrap_or(0);
    outcome(pass, format!("{}; drift < {SANDWICH_DRIFT}; max dofs {dofs} <= {GRAM_DOFS}; {secs:.1}s < {SANDWICH_SECONDS}s", parts.join("; ")))
}

fn gagliardo() -> Outcome {
    let space = build_space(Arc::new(triangulate(&unit_square(), 0.2, 1.0).unwrap()), 1).unwrap();
    let u = space.interpolate(|p| p.x);
    let v = gagliardo_seminorm_sq(&u, 0.5, SeminormPart::Whole, &GagliardoOptions::default()).unwrap();
    let rel = (v - MC_ORACLE).abs() / MC_ORACLE;
    outcome(rel < GAGLIARDO_TOL, format!("value={v:.6} oracle={MC_ORACLE:.6} rel={rel:.2e} < {GAGLIARDO_TOL}"))
}

fn kernel() -> Outcome {
    let sq = unit_square::<f64>();
    let l = l_shape::<f64>();
    let d_sq = kernel_dimension(&sq, 0.0).dim;
    let d_l: Vec<usize> = [-0.25, 0.0].iter().map(|&s| kernel_dimension(&l, s).dim).collect();
    let p = match critical_p(&l) {
        CriticalP::Threshold(p) => p,
        CriticalP::Convex => f64::NAN,
    };
    let (a, b) = (w1p_membership(2.0 / 3.0, 1.19).member, w1p_membership(2.0 / 3.0, 1.21).member);
    let alpha = 2.0 / 3.0;
    let threshold = 2.0 / (alpha + 1.0);
    let mut disagreements = 0;
    let mut outside_band = 0;
    for i in 0..=120 {
        let p = 1.0 + 0.005 * i as f64;
        let member = w1p_membership(alpha, p).member;
        let divergent = radial_divergence(alpha, p, DETECTOR_DECADES);
        if member == divergent {
            disagreements += 1;
            if (p - threshold).abs() > THRESHOLD_BAND {
                outside_band += 1;
            }
        }
    }
    outcome(
        d_sq == 0 && d_l == [1, 1] && p == 1.2 && a && !b && outside_band == 0,
        format!(
            "dim square(0)={d_sq}, L(-0.25, 0)={d_l:?}; critical_p={p:?}; w1p(2/3,1.19)={a} w1p(2/3,1.21)={b}; detector disagreements {disagreements} (outside band {THRESHOLD_BAND}: {outside_band})"
        ),
    )
}

fn lsq_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

fn singular() -> Outcome {
    let l = l_shape::<f64>();
    let frame = CornerFrame::at_vertex(&l, 0).unwrap();
    let alpha = 2.0 / 3.0;
    let s = singular_harmonic(frame, alpha);
    let z = kernel_function(frame, alpha);
    let mut g = ChaCha8Rng::seed_from_u64(7);
    let (mut ls, mut lz, mut dv) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..HARMONIC_POINTS {
        let r: f64 = g.gen_range(0.1..0.9);
        let th: f64 = g.gen_range(0.0..1.5 * PI);
        let p = Point2d::new(r * th.cos(), r * th.sin());
        let (js, jz) = (s.jet(p), z.jet(p));
        ls = ls.max((js.hess[0][0] + js.hess[1][1]).abs());
        lz = lz.max((jz.hess[0][0] + jz.hess[1][1]).abs());
        // the frame at the origin measures theta from the positive x axis
        let own_s = r.powf(alpha) * (alpha * th).sin();
        let own_z = (r.powf(-alpha) - r.powf(alpha)) * (alpha * th).sin();
        dv = dv.max((js.value - own_s).abs()).max((jz.value - own_z).abs());
    }
    let cfg = config(r#"{"name": "kernel", "domain": "lshape"}"#);
    let res = run_kernel_suite(&cfg).unwrap();
    let csv = &res.table("rates").unwrap().csv;
    let mut rates = Vec::new();
    for mesh in ["uniform", "graded"] {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for line in csv.lines().skip(1).filter(|l| l.starts_with(mesh)) {
            let f: Vec<&str> = line.split(',').collect();
            xs.push(f[2].parse::<f64>().unwrap().ln());
            ys.push(f[4].parse::<f64>().unwrap().ln());
        }
        rates.push((xs.len(), lsq_slope(&xs, &ys)));
    }
    let (u, gr) = (rates[0].1, rates[1].1);
    outcome(
        ls < HARMONIC_TOL
            && lz < HARMONIC_TOL
            && dv < VALUE_TOL
            && rates.iter().all(|r| r.0 == 4)
            && (UNIFORM_RATE.0..=UNIFORM_RATE.1).contains(&u)
            && gr >= GRADED_RATE_MIN,
        format!(
            "max|ΔS|={ls:.2e} max|Δz|={lz:.2e} < {HARMONIC_TOL:e} at {HARMONIC_POINTS} points (values vs closed form {dv:.1e} < {VALUE_TOL:e}); rate uniform={u:.4} in [{}, {}], graded={gr:.4} >= {GRADED_RATE_MIN} over 3 refinements",
            UNIFORM_RATE.0, UNIFORM_RATE.1
        ),
    )
}

/// `∫_0^ε v_y² dx` after `x = e^{-t}`: `∫_{-ln ε}^∞ (ln t - ln ln 2)² e^{-t} dt`, composite Simpson on a long window.
fn i_eps_oracle(eps: f64) -> f64 {
    let a = -eps.ln();
    let b = a + 60.0;
    let n = 200_000;
    let h = (b - a) / n as f64;
    let c = 2f64.ln().ln();
    let f = |t: f64| (t.ln() - c).powi(2) * (-t).exp();
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn necas() -> Outcome {
    let mut worst = 0.0f64;
    for y in [1e-8, 1e-4, 0.01, 0.1, 0.25, 0.4, 0.49] {
        worst = worst.max((NecasField::dy(y).unwrap() - NecasField::dy_by_quadrature(y).unwrap()).abs());
        worst = worst.max((NecasField::value(y).unwrap() - NecasField::value_by_quadrature(y).unwrap()).abs());
    }
    let mut pass = worst < NECAS_TOL;
    let mut parts = Vec::new();
    for eps in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let (v, lib_bound) = i_eps(eps).unwrap();
        let l = (-eps.ln()).ln();
        let bound = 0.5 * eps * l * l;
        let oracle = i_eps_oracle(eps);
        pass &= v >= bound && (lib_bound - bound).abs() <= 1e-15 * bound && (v - oracle).abs() <= NECAS_TOL * oracle;
        parts.push(format!("eps=1/{}: I={v:.6} oracle={oracle:.6} bound={bound:.4}", (1.0 / eps).round()));
    }
    outcome(pass, format!("closed forms vs quadrature max gap {worst:.1e} < {NECAS_TOL:e}; {}", parts.join(", ")))
}

fn determinism(first_csv: &Option<Vec<u8>>) -> Outcome {
    let cfg = config(r#"{"name": "counterexample", "k_list": [2, 4, 8, 16], "seed": 0, "timing": false}"#);
    let runs: Vec<RunResult> = (0..2).map(|_| run_counterexample(&cfg).unwrap()).collect();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let files: Vec<Vec<u8>> = runs
        .iter()
        .zip(&dirs)
        .map(|(r, d)| {
            emit_report(std::slice::from_ref(r), d.path()).unwrap();
            std::fs::read(d.path().join("blowup.csv")).unwrap()
        })
        .collect();
    let library_matches = first_csv.as_ref().map(|c| *c == files[0]).unwrap_or(false);
    outcome(
        files[0] == files[1] && library_matches,
        format!("two CLI runs {} bytes each identical={}; identical to the library run={library_matches}", files[0].len(), files[0] == files[1]),
    )
}

fn main() -> ExitCode {
    let mut csv = None;
    let mut results = Vec::new();
    let mut run = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| outcome(false, "panicked".into()));
        println!("{} criterion {id} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push(o.pass);
    };
    run(1, "Rellich identity", &mut rellich);
    run(2, "Green identity", &mut green);
    run(3, "sawtooth counterexample", &mut || counterexample(&mut csv));
    run(4, "norm sandwich", &mut sandwich);
    run(5, "Gagliardo oracle", &mut gagliardo);
    run(6, "kernel arithmetic", &mut kernel);
    run(7, "singular solutions", &mut singular);
    run(8, "Necas function", &mut necas);
    run(9, "determinism", &mut || determinism(&csv));
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
