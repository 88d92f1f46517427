//! `mesh`, `solve` and `norms` experiments.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use dirichlet_lab::fem::{build_space, solve_dirichlet, weak_laplacian_residual, Analytic, Difference, FeFunction, FeSpace, Field, Source};
use dirichlet_lab::meshing::{triangulate, Mesh, MIN_ANGLE_DEG};
use dirichlet_lab::norms::{
    boundary_norms, classical_norms, dual_gradient_norm, gagliardo_seminorm_sq, h00_half_norm, quotient_norm, weighted_gradient_norm,
    weighted_hessian_norm, DualVariant, EdgeRule, GagliardoOptions, NormContext, NormReport, SeminormPart, Weight,
};
use dirichlet_lab::Point2d;

use super::{corner_solution, random_function, rng, sine_jet};
use crate::config::ExperimentConfig;
use crate::report::{Check, RunResult, Table};
use crate::CliError;

fn fine_mesh(cfg: &ExperimentConfig) -> Result<Mesh<f64>, CliError> {
    Ok(triangulate(&cfg.domain_spec().build()?, cfg.h, cfg.grading)?)
}

pub fn run_mesh(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let d = cfg.domain_spec().build()?;
    let m = fine_mesh(cfg)?;
    let mut r = RunResult::new(cfg);
    r.checks.push(match m.validate() {
        Ok(()) => Check::judged("valid", true, vec![], ""),
        Err(e) => Check::errored("valid", &e),
    });
    let angle = m.min_angle_deg();
    r.checks.push(Check::judged("min_angle", angle >= MIN_ANGLE_DEG, vec![("min_angle_deg", angle)], format!("bound {MIN_ANGLE_DEG}")));
    let (am, ad) = (m.total_area(), d.area());
    r.checks.push(Check::judged("area", (am - ad).abs() <= 1e-12 * ad, vec![("mesh_area", am), ("domain_area", ad)], ""));
    r.tables.push(Table {
        name: "mesh_stats".into(),
        csv: format!("nodes,triangles,h_max,min_angle_deg,area\n{},{},{:.10e},{:.10e},{:.10e}\n", m.num_nodes(), m.num_triangles(), m.h_max, angle, am),
    });
    r.files.push(("mesh.txt".into(), m.to_text()));
    Ok(r)
}

/// Source, boundary data and (when known) exact solution of the `solve` problem.
struct Problem {
    f: Box<dyn Fn(Point2d) -> f64 + Sync>,
    g: Box<dyn Fn(Point2d) -> f64 + Sync>,
    exact: Option<Box<dyn Fn(Point2d) -> dirichlet_lab::fem::Jet<f64> + Sync>>,
}

fn problem(cfg: &ExperimentConfig) -> Result<Problem, CliError> {
    let d = cfg.domain_spec().build()?;
    Ok(match cfg.function.as_str() {
        "sine" => Problem {
            f: Box::new(|p| 2.0 * PI * PI * sine_jet(p).value),
            g: Box::new(|p| sine_jet(p).value),
            exact: Some(Box::new(sine_jet)),
        },
        "x" => Problem {
            f: Box::new(|_| 0.0),
            g: Box::new(|p| p.x),
            exact: Some(Box::new(|p| dirichlet_lab::fem::Jet { value: p.x, grad: Point2d::new(1.0, 0.0), hess: [[0.0; 2]; 2] })),
        },
        "corner" => {
            let s = corner_solution(&d)?;
            let s2 = s.clone();
            Problem { f: Box::new(|_| 0.0), g: Box::new(move |p| s.value(p)), exact: Some(Box::new(move |p| s2.jet(p))) }
        }
        _ => Problem { f: Box::new(|_| 1.0), g: Box::new(|_| 0.0), exact: None },
    })
}

pub fn run_solve(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let m = fine_mesh(cfg)?;
    let mesh_text = m.to_text();
    let space = build_space(Arc::new(m), cfg.order)?;
    let pr = problem(cfg)?;
    let u = solve_dirichlet(&space, &Source::Function(&*pr.f), &*pr.g)?;
    let mut r = RunResult::new(cfg);
    let zero = space.function(vec![0.0; space.dof_count()])?;
    let res = weak_laplacian_residual(&space, &u, &Source::Function(&*pr.f))?;
    let scale = weak_laplacian_residual(&space, &zero, &Source::Function(&*pr.f))?.max(1.0);
    r.checks.push(Check::judged("residual", res <= 1e-8 * scale, vec![("residual", res), ("scale", scale)], "bound 1e-8 * scale"));
    let (mut l2, mut h1) = (f64::NAN, f64::NAN);
    if let Some(ex) = &pr.exact {
        let ctx = NormContext::new(&space, cfg.quad_degree(), cfg.boundary_levels);
        let field = Analytic::new(|p| ex(p));
        let e = classical_norms(&ctx, &Difference { a: &u, b: &field });
        (l2, h1) = (e.l2, e.h1_semi);
    }
    r.tables.push(Table {
        name: "solve".into(),
        csv: format!("function,order,dofs,residual,l2_error,h1_error\n{},{},{},{:.10e},{:.10e},{:.10e}\n", cfg.function, cfg.order, space.dof_count(), res, l2, h1),
    });
    r.files.push(("mesh.txt".into(), mesh_text));
    r.files.push(("solution.txt".into(), u.to_text("mesh.txt")));
    Ok(r)
}

fn norms_function(cfg: &ExperimentConfig, space: &Arc<FeSpace<f64>>) -> Result<FeFunction<f64>, CliError> {
    Ok(match cfg.function.as_str() {
        "sine" => space.interpolate(|p| sine_jet(p).value),
        "x" => space.interpolate(|p| p.x),
        "corner" => {
            let s = corner_solution(&cfg.domain_spec().build()?)?;
            space.interpolate(|p| s.value(p))
        }
        _ => random_function(space, &mut rng(cfg.seed), false),
    })
}

/// One [`NormReport`] per `s`; norms that do not apply to the function are left empty.
pub fn run_norms(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let spec = cfg.domain_spec();
    let d = spec.build()?;
    let m = triangulate(&d, cfg.coarse_h, cfg.grading)?;
    let space = build_space(Arc::new(m), cfg.order)?;
    let u = norms_function(cfg, &space)?;
    let ctx = NormContext::new(&space, cfg.quad_degree(), cfg.boundary_levels).with_domain(d);
    let opts = GagliardoOptions::default();
    let zero_trace = space.boundary_dofs().iter().all(|&i| u.coeffs[i].abs() <= 1e-12);
    let mesh_label = format!("{}-h{}", spec.label(), cfg.coarse_h);
    let mut reports = Vec::new();
    let mut r = RunResult::new(cfg);
    let mut body = || -> Result<(), CliError> {
        let c = classical_norms(&ctx, &u);
        let b = boundary_norms(&ctx, &u, None, EdgeRule::Gauss(6))?;
        for &s in &cfg.s_values {
            let mut rep = NormReport::new(&cfg.function, &mesh_label, s, cfg.quad_degree());
            rep.insert("l2", c.l2)?;
            rep.insert("h1_semi", c.h1_semi)?;
            rep.insert("h1", c.h1)?;
            if s > 0.0 && s < 1.0 {
                rep.insert("gagliardo_sq", gagliardo_seminorm_sq(&u, s, SeminormPart::Whole, &opts)?)?;
            }
            rep.insert("weighted_grad", weighted_gradient_norm(&ctx, &u, s, Weight::Exact)?)?;
            if u.has_hessian() {
                rep.insert("weighted_hess", weighted_hessian_norm(&ctx, &u, 1.0 - s)?)?;
            }
            rep.insert("quotient", quotient_norm(&ctx, &u, s, &opts)?)?;
            rep.insert("dual_grad", dual_gradient_norm(&u, s, DualVariant::ZeroTrace, &opts)?)?;
            if zero_trace {
                rep.insert("h00_half", h00_half_norm(&ctx, &u, &opts)?)?;
            }
            rep.insert("boundary_l2", b.l2)?;
            rep.insert("boundary_h1_semi", b.h1_semi)?;
            reports.push(rep);
        }
        Ok(())
    };
    match body() {
        Ok(()) => {
            let n = reports.iter().map(|x| x.values.len()).sum::<usize>() as f64;
            r.checks.push(Check::judged("finite_nonnegative", true, vec![("values", n)], ""));
            let constant = is_constant(&u);
            let zeros: Vec<&str> = reports.iter().flat_map(|x| x.zero_seminorms()).collect();
            let ok = constant || zeros.is_empty();
            r.checks.push(Check::judged("nonzero_seminorms", ok, vec![("zero_entries", zeros.len() as f64)], if ok { String::new() } else { zeros.join(" ") }));
        }
        Err(e) => r.checks.push(Check::errored("finite_nonnegative", &e)),
    }
    let mut csv = NormReport::csv_header();
    csv.push('\n');
    for rep in &reports {
        writeln!(csv, "{}", rep.csv_row()).unwrap();
    }
    r.tables.push(Table { name: "norms".into(), csv });
    Ok(r)
}

fn is_constant(u: &FeFunction<f64>) -> bool {
    u.coeffs.iter().all(|&c| (c - u.coeffs[0]).abs() <= 1e-14)
}
