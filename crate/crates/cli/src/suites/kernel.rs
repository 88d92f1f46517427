//! Corner arithmetic, singular functions, the Grisvard check and convergence rates.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_rational::Ratio;
use rand::Rng;

use dirichlet_lab::fem::{build_space, solve_dirichlet, Analytic, Difference, Field, Source};
use dirichlet_lab::geometry::Domain;
use dirichlet_lab::meshing::{refine, triangulate};
use dirichlet_lab::norms::{classical_norms, weighted_hessian_norm, NormContext};
use dirichlet_lab::singular::{critical_p, kernel_dimension, kernel_function, nu_s_exact, radial_divergence, w1p_membership, CornerFrame, CriticalP};
use dirichlet_lab::Point2d;

use super::{corner_solution, drift, guarded, lsq_slope, rng, widest_corner};
use crate::config::ExperimentConfig;
use crate::plot::{line_plot, Series};
use crate::report::{Check, Plot, RunResult, Table};
use crate::CliError;

/// Index grid of the kernel-dimension table.
pub const S_GRID: [f64; 8] = [-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0, 1.5];
/// Band around `p = 2/(α+1)` where classifier and detector may disagree.
pub const THRESHOLD_BAND: f64 = 1e-3;
/// Decades integrated by the divergence detector.
pub const DETECTOR_DECADES: usize = 12;
pub const HARMONIC_TOL: f64 = 1e-9;
pub const UNIFORM_RATE: (f64, f64) = (0.57, 0.77);
pub const GRADED_RATE_MIN: f64 = 0.9;
/// Mesh levels of the rate study (three refinements).
pub const RATE_LEVELS: usize = 4;
pub const GRISVARD_DRIFT: f64 = 0.2;

pub fn run_kernel_suite(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let d = cfg.domain_spec().build()?;
    let mut r = RunResult::new(cfg);
    let reentrant = widest_corner(&d).1 > PI + 1e-9;

    let mut table = String::from("s,dim,applicable\n");
    r.checks.push(guarded("kernel_dimension", || dimension_check(&d, &mut table)));
    r.tables.push(Table { name: "kernel_dimension".into(), csv: table });

    r.checks.push(match critical_p(&d) {
        CriticalP::Threshold(p) => {
            let alpha = PI / widest_corner(&d).1;
            Check::judged("critical_p", (p * (alpha + 1.0) - 2.0).abs() < 1e-12, vec![("critical_p", p), ("alpha", alpha)], "")
        }
        CriticalP::Convex => Check::judged("critical_p", !reentrant, vec![], "convex: no threshold"),
    });

    let mut w1p = String::from("alpha,p,member,divergent,margin\n");
    r.checks.push(w1p_check(&d, &mut w1p));
    r.tables.push(Table { name: "w1p".into(), csv: w1p });

    r.checks.push(guarded("harmonicity", || harmonicity_check(&d, cfg.seed)));

    if reentrant {
        r.checks.push(Check::skipped("grisvard", "domain is not convex"));
        match rate_study(cfg, &d) {
            Ok((checks, table, plot)) => {
                r.checks.extend(checks);
                r.tables.push(table);
                r.plots.push(plot);
            }
            Err(e) => {
                r.checks.push(Check::errored("rate_uniform", &e));
                r.checks.push(Check::errored("rate_graded", &e));
            }
        }
    } else {
        r.checks.push(guarded("grisvard", || grisvard_check(cfg, &d)));
        r.checks.push(Check::skipped("rate_uniform", "no reentrant corner"));
        r.checks.push(Check::skipped("rate_graded", "no reentrant corner"));
    }
    Ok(r)
}

/// `ω/π` as a fraction when it is one with a small denominator.
fn angle_fraction(omega: f64) -> Option<Ratio<i64>> {
    let x = omega / PI;
    (1..=48).find_map(|den| {
        let num = (x * den as f64).round();
        ((x * den as f64 - num).abs() < 1e-10).then(|| Ratio::new(num as i64, den))
    })
}

/// Floating-point dimension against exact rational arithmetic wherever the angles allow it.
fn dimension_check(d: &Domain<f64>, table: &mut String) -> Result<Check, CliError> {
    let fractions: Option<Vec<Ratio<i64>>> = d.corner_angles().iter().map(|c| angle_fraction(c.1)).collect();
    let mut mismatches = 0;
    let mut dims = Vec::new();
    for &s in &S_GRID {
        let k = kernel_dimension(d, s);
        writeln!(table, "{s},{},{}", k.dim, k.applicable).unwrap();
        dims.push((s, k.dim));
        if let Some(fr) = &fractions {
            let expected = if s <= 0.0 {
                fr.iter().filter(|&&w| w > Ratio::from_integer(1)).count()
            } else {
                let sr = Ratio::new((s * 4.0).round() as i64, 4);
                fr.iter().map(|&w| nu_s_exact(w, sr).max(0) as usize).sum()
            };
            if k.applicable && k.dim != expected {
                mismatches += 1;
            }
        }
    }
    let at = |s: f64| dims.iter().find(|x| x.0 == s).map(|x| x.1 as f64).unwrap_or(f64::NAN);
    let note = if fractions.is_some() { "compared with exact rational arithmetic" } else { "irrational angles: no exact comparison" };
    Ok(Check::judged(
        "kernel_dimension",
        mismatches == 0,
        vec![("dim_s-0.25", at(-0.25)), ("dim_s0", at(0.0)), ("dim_s0.5", at(0.5)), ("mismatches", mismatches as f64)],
        note,
    ))
}

/// Membership classifier against the divergence detector on a (α, p) grid.
fn w1p_check(d: &Domain<f64>, table: &mut String) -> Check {
    let mut alphas = vec![0.5, 2.0 / 3.0, 0.8, 1.0];
    for &(_, w) in d.corner_angles() {
        if w > PI + 1e-9 {
            alphas.push(PI / w);
        }
    }
    let mut bad = 0;
    let mut near = 0;
    for &alpha in &alphas {
        for i in 0..=120 {
            let p = 1.0 + 0.005 * i as f64;
            let m = w1p_membership(alpha, p);
            let div = radial_divergence(alpha, p, DETECTOR_DECADES);
            writeln!(table, "{alpha:.12},{p:.3},{},{div},{:.6e}", m.member, m.margin).unwrap();
            if m.member == div {
                if (p - 2.0 / (alpha + 1.0)).abs() <= THRESHOLD_BAND {
                    near += 1;
                } else {
                    bad += 1;
                }
            }
        }
    }
    Check::judged(
        "w1p_grid",
        bad == 0,
        vec![("mismatches", bad as f64), ("mismatches_near_threshold", near as f64)],
        format!("disagreement allowed within {THRESHOLD_BAND} of the threshold"),
    )
}

/// `|Δ S|` and `|Δ z|` at 100 seeded points of the sector around the widest corner.
fn harmonicity_check(d: &Domain<f64>, seed: u64) -> Result<Check, CliError> {
    let (i, omega) = widest_corner(d);
    let frame = CornerFrame::at_vertex(d, i).map_err(|e| CliError::Config(e.to_string()))?;
    let alpha = PI / omega;
    let s = corner_solution(d)?;
    let z = kernel_function(frame, alpha);
    let reach = frame.clearance.min(1.0);
    let mut g = rng(seed);
    let (mut ms, mut mz) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let rad = g.gen_range(0.1..0.9) * reach;
        let th = g.gen_range(0.01..omega - 0.01);
        let dir = frame.theta0 + th;
        let p = frame.vertex + Point2d::new(rad * dir.cos(), rad * dir.sin());
        let (js, jz) = (s.jet(p), z.jet(p));
        ms = ms.max((js.hess[0][0] + js.hess[1][1]).abs());
        mz = mz.max((jz.hess[0][0] + jz.hess[1][1]).abs());
    }
    Ok(Check::judged(
        "harmonicity",
        ms < HARMONIC_TOL && mz < HARMONIC_TOL,
        vec![("max_lap_s", ms), ("max_lap_z", mz), ("alpha", alpha)],
        format!("bound {HARMONIC_TOL:e}"),
    ))
}

/// `(‖∇_h² v‖² + ‖v‖²_{H¹})^{1/2} / ‖Δ_h v‖` for the P2 solution with `f = 1`, on two meshes.
fn grisvard_check(cfg: &ExperimentConfig, d: &Domain<f64>) -> Result<Check, CliError> {
    let coarse = triangulate(d, cfg.coarse_h, 1.0)?;
    let fine = refine(&coarse);
    let mut c = [0.0; 2];
    for (k, m) in [coarse, fine].into_iter().enumerate() {
        let space = build_space(Arc::new(m), 2)?;
        let v = solve_dirichlet(&space, &Source::Function(&|_| 1.0), &|_| 0.0)?;
        let ctx = NormContext::new(&space, 4, 0);
        let hess = weighted_hessian_norm(&ctx, &v, 0.0)?;
        let h1 = classical_norms(&ctx, &v).h1;
        let lap = ctx
            .integrate(|t, l, p| {
                let j = v.jet(t, l, p);
                let x = j.hess[0][0] + j.hess[1][1];
                x * x
            })
            .sqrt();
        c[k] = (hess * hess + h1 * h1).sqrt() / lap;
    }
    let dr = drift(c[0], c[1]);
    Ok(Check::judged(
        "grisvard",
        dr < GRISVARD_DRIFT,
        vec![("c_coarse", c[0]), ("c_fine", c[1]), ("drift", dr)],
        format!("drift bound {GRISVARD_DRIFT}"),
    ))
}

/// H¹ errors of P1 solutions with the singular boundary data: red refinements of
/// a uniform mesh, and graded meshes rebuilt at each halved size.
fn rate_study(cfg: &ExperimentConfig, d: &Domain<f64>) -> Result<(Vec<Check>, Table, Plot), CliError> {
    let exact = corner_solution(d)?;
    let field = Analytic::new(|p| exact.jet(p));
    let error = |m: Arc<dirichlet_lab::meshing::Mesh<f64>>| -> Result<(usize, f64), CliError> {
        let space = build_space(m, 1)?;
        let u = solve_dirichlet(&space, &Source::Zero, &|p| exact.value(p))?;
        let ctx = NormContext::new(&space, 4, 4);
        let e = classical_norms(&ctx, &Difference { a: &u as &dyn Field<f64>, b: &field });
        Ok((space.dof_count(), e.h1_semi))
    };
    let mut csv = String::from("mesh,level,h,dofs,h1_error\n");
    let mut checks = Vec::new();
    let mut series = Vec::new();
    for (label, graded) in [("uniform", false), ("graded", true)] {
        let mut uniform = Some(triangulate(d, cfg.rate_h, 1.0)?);
        let (mut hs, mut errs, mut pts) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..RATE_LEVELS {
            let h = cfg.rate_h / f64::powi(2.0, k as i32);
            let mesh = if graded {
                triangulate(d, h, cfg.rate_grading)?
            } else {
                let m = uniform.take().expect("set before each level");
                uniform = Some(refine(&m));
                m
            };
            let (dofs, e) = error(Arc::new(mesh))?;
            writeln!(csv, "{label},{k},{h:.6e},{dofs},{e:.12e}").unwrap();
            hs.push(h.ln());
            errs.push(e.ln());
            pts.push((h, e));
        }
        let rate = lsq_slope(&hs, &errs);
        checks.push(if graded {
            Check::judged("rate_graded", rate >= GRADED_RATE_MIN, vec![("rate", rate), ("grading", cfg.rate_grading)], format!("bound >= {GRADED_RATE_MIN}"))
        } else {
            Check::judged(
                "rate_uniform",
                (UNIFORM_RATE.0..=UNIFORM_RATE.1).contains(&rate),
                vec![("rate", rate)],
                format!("range [{}, {}]", UNIFORM_RATE.0, UNIFORM_RATE.1),
            )
        });
        series.push((label, pts));
    }
    let colours = ["steelblue", "firebrick"];
    let ser: Vec<Series> = series.iter().zip(colours).map(|((l, p), c)| Series { label: l, colour: c, points: p.clone() }).collect();
    let svg = line_plot("H1 error of the corner solution", "h", "H1 seminorm error", &ser, true);
    Ok((checks, Table { name: "rates".into(), csv }, Plot { name: "rates".into(), svg }))
}
