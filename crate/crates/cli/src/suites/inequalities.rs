//! Inequality and identity checks on one domain.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use dirichlet_lab::fem::{build_space, solve_dirichlet, Analytic, FeFunction, FeSpace, Jet, Source};
use dirichlet_lab::geometry::Domain;
use dirichlet_lab::meshing::{refine, triangulate, Mesh};
use dirichlet_lab::norms::{
    classical_norms, green_identity, h00_half_norm, hardy_ratio, mean_value, necas_quantities, quotient_norm, rellich_identity,
    trace_inequality_check, weighted_gradient_norm, DualNormOperator, DualVariant, FractionalGram, EdgeRule, GagliardoOptions, NormContext, SobolevIndex,
    Weight, MAX_GRAM_DOFS,
};
use dirichlet_lab::Point2d;

use super::{drift, guarded, harmonic_polynomial, random_function, rng, sine_jet};
use crate::config::{DomainSpec, ExperimentConfig};
use crate::report::{Check, RunResult, Table};
use crate::CliError;

/// Largest relative change of an empirical constant over one refinement.
pub const MAX_DRIFT: f64 = 0.2;
/// Relative tolerance of the Rellich sides against π².
pub const RELLICH_TOL: f64 = 1e-3;
/// Absolute tolerance of the Green sides against -8.
pub const GREEN_TOL: f64 = 1e-3;
/// Admissible range of the Nečas ratios.
pub const NECAS_RANGE: (f64, f64) = (0.2, 5.0);

/// Random functions are drawn on a mesh this many times coarser than the first level.
pub const SEED_COARSENING: f64 = 2.0;

/// One mesh with the Gram matrices and dual operators of every index in use.
struct Level {
    space: Arc<FeSpace<f64>>,
    ctx: NormContext<f64>,
    grams: BTreeMap<u64, FractionalGram<f64>>,
    duals: BTreeMap<u64, DualNormOperator<f64>>,
}

impl Level {
    fn new(mesh: Mesh<f64>, d: &Domain<f64>, cfg: &ExperimentConfig, opts: &GagliardoOptions) -> Result<Self, CliError> {
        let space = build_space(Arc::new(mesh), 1)?;
        let ctx = NormContext::new(&space, 4, cfg.boundary_levels).with_domain(d.clone());
        let mut grams = BTreeMap::new();
        let mut duals = BTreeMap::new();
        let fractional = cfg.s_values.iter().copied().filter(|&s| s > 0.0 && s < 1.0).chain([0.5]);
        for s in fractional {
            grams.entry(s.to_bits()).or_insert(FractionalGram::new(&space, s, opts, MAX_GRAM_DOFS)?);
        }
        for s in cfg.s_values.iter().copied().chain([0.5, 1.0]) {
            duals.entry(s.to_bits()).or_insert(DualNormOperator::new(space.mesh(), s, DualVariant::ZeroTrace, opts)?);
        }
        Ok(Self { space, ctx, grams, duals })
    }

    fn gram(&self, s: f64) -> &FractionalGram<f64> {
        &self.grams[&s.to_bits()]
    }

    fn dual(&self, s: f64) -> &DualNormOperator<f64> {
        &self.duals[&s.to_bits()]
    }
}

pub fn run_inequality_suite(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let spec = cfg.domain_spec();
    let d = spec.build()?;
    let mut r = RunResult::new(cfg);

    if spec == DomainSpec::Square {
        let solved = fine_sine_solution(cfg);
        match &solved {
            Ok((ctx, u)) => {
                r.checks.push(guarded("rellich", || rellich_check(ctx, u)));
                r.checks.push(guarded("green", || green_check(ctx, u)));
            }
            Err(e) => {
                r.checks.push(Check::errored("rellich", e));
                r.checks.push(Check::errored("green", e));
            }
        }
    } else {
        r.checks.push(Check::skipped("rellich", "target is stated on the unit square"));
        r.checks.push(Check::skipped("green", "target is stated on the unit square"));
    }

    r.checks.push(guarded("trace_identity", || trace_check(cfg, &d)));
    r.checks.push(guarded("necas", || necas_check(cfg, &d)));

    let coarse = triangulate(&d, cfg.coarse_h, 1.0)?;
    let fine = refine(&coarse);
    let opts = GagliardoOptions::default();
    let levels = [Level::new(coarse, &d, cfg, &opts)?, Level::new(fine, &d, cfg, &opts)?];
    let seed_space = build_space(Arc::new(triangulate(&d, SEED_COARSENING * cfg.coarse_h, 1.0)?), 1)?;
    let mut g = rng(cfg.seed);
    let mean_free: Vec<FeFunction<f64>> = (0..cfg.samples).map(|_| random_function(&seed_space, &mut g, false)).collect();
    let zero_trace: Vec<FeFunction<f64>> = (0..cfg.samples).map(|_| random_function(&seed_space, &mut g, true)).collect();
    let sets = [on_level(&levels[0], &mean_free, &zero_trace)?, on_level(&levels[1], &mean_free, &zero_trace)?];

    let mut csv = String::from("s,level,dofs,sample,quotient,dual,weighted\n");
    for &s in &cfg.s_values {
        let name = format!("sandwich_s{s}");
        let check = guarded(&name, || sandwich_check(&name, s, &levels, &sets, &mut csv));
        r.checks.push(check);
    }
    r.tables.push(Table { name: "sandwich".into(), csv });

    for &s in &cfg.s_values {
        let name = format!("hardy_s{s}");
        if SobolevIndex::new(s).map(|i| i.is_critical()).unwrap_or(false) || s == 0.0 || s == 1.0 {
            r.checks.push(Check::skipped(&name, "Hardy inequality is checked only for 0 < s < 1, s != 1/2"));
            continue;
        }
        r.checks.push(guarded(&name, || hardy_check(s, &levels, &sets)));
    }
    r.checks.push(guarded("h00_equivalence", || h00_check(&levels, &sets)));
    r.checks.push(guarded("homogeneity", || homogeneity_check(&levels[0], &sets[0].0[0])));
    r.checks.push(guarded("dual_s1", || dual_s1_check(&levels[0], &sets[0].0[0])));
    Ok(r)
}

/// P-order solution of `-Δu = 2π² sin(πx) sin(πy)` on the unit square.
fn fine_sine_solution(cfg: &ExperimentConfig) -> Result<(NormContext<f64>, FeFunction<f64>), CliError> {
    let m = triangulate(&DomainSpec::Square.build()?, cfg.h, 1.0)?;
    let space = build_space(Arc::new(m), cfg.order)?;
    let f = |p: Point2d| 2.0 * PI * PI * sine_jet(p).value;
    let u = solve_dirichlet(&space, &Source::Function(&f), &|_| 0.0)?;
    Ok((NormContext::new(&space, cfg.quad_degree(), cfg.boundary_levels), u))
}

fn sine_laplacian(p: Point2d) -> f64 {
    -2.0 * PI * PI * sine_jet(p).value
}

fn rellich_check(ctx: &NormContext<f64>, u: &FeFunction<f64>) -> Result<Check, CliError> {
    let id = rellich_identity(ctx, u, &sine_laplacian, Point2d::new(0.5, 0.5), EdgeRule::Gauss(6))?;
    let target = PI * PI;
    let (el, er) = ((id.lhs - target).abs() / target, (id.rhs - target).abs() / target);
    Ok(Check::judged(
        "rellich",
        el < RELLICH_TOL && er < RELLICH_TOL,
        vec![("lhs", id.lhs), ("rhs", id.rhs), ("target", target)],
        format!("relative tolerance {RELLICH_TOL}"),
    ))
}

fn green_check(ctx: &NormContext<f64>, phi: &FeFunction<f64>) -> Result<Check, CliError> {
    let one = Analytic::new(|_p: Point2d| Jet { value: 1.0, ..Jet::zero() });
    let id = green_identity(ctx, &one, phi, &sine_laplacian, EdgeRule::Gauss(6))?;
    Ok(Check::judged(
        "green",
        (id.lhs + 8.0).abs() < GREEN_TOL && (id.rhs + 8.0).abs() < GREEN_TOL,
        vec![("lhs", id.lhs), ("rhs", id.rhs), ("target", -8.0)],
        format!("absolute tolerance {GREEN_TOL}"),
    ))
}

/// Divergence identity behind the trace inequality, for a smooth P2 function.
fn trace_check(cfg: &ExperimentConfig, d: &Domain<f64>) -> Result<Check, CliError> {
    let m = triangulate(d, cfg.coarse_h, 1.0)?;
    let space = build_space(Arc::new(m), 2)?;
    let u = space.interpolate(|p| p.x.exp() * p.y.cos() + 0.5 * p.y);
    let ctx = NormContext::new(&space, 6, cfg.boundary_levels);
    let t = trace_inequality_check(&ctx, &u)?;
    let gap = (t.ratio - 1.0).abs();
    Ok(Check::judged("trace_identity", gap < 1e-8, vec![("lhs", t.lhs), ("rhs", t.rhs), ("ratio", t.ratio)], "|ratio - 1| < 1e-8"))
}

/// Nečas ratios of the harmonic polynomials `Re((z - c)^n)`, `n = 1..6`, about the centroid.
fn necas_check(cfg: &ExperimentConfig, d: &Domain<f64>) -> Result<Check, CliError> {
    let m = triangulate(d, cfg.coarse_h, 1.0)?;
    let space = build_space(Arc::new(m), 2)?;
    let ctx = NormContext::new(&space, 8, cfg.boundary_levels);
    let c = d.centroid();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for n in 1..=6u32 {
        let u = Analytic::new(move |p| harmonic_polynomial(n, c, p));
        let q = necas_quantities(&ctx, &u, &|_| 0.0, EdgeRule::Gauss(8))?;
        for v in [q.normal_ratio(), q.tangential_ratio()] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok(Check::judged(
        "necas",
        lo >= NECAS_RANGE.0 && hi <= NECAS_RANGE.1,
        vec![("min_ratio", lo), ("max_ratio", hi)],
        format!("ratios within [{}, {}]", NECAS_RANGE.0, NECAS_RANGE.1),
    ))
}

type Sets = [(Vec<FeFunction<f64>>, Vec<FeFunction<f64>>); 2];

/// Seed functions interpolated onto one level, the first set shifted to zero mean.
fn on_level(level: &Level, mean_free: &[FeFunction<f64>], zero_trace: &[FeFunction<f64>]) -> Result<(Vec<FeFunction<f64>>, Vec<FeFunction<f64>>), CliError> {
    let mut a = Vec::with_capacity(mean_free.len());
    for u in mean_free {
        let v = u.transfer(&level.space)?;
        let m = mean_value(&level.ctx, &v);
        a.push(v.plus_constant(-m));
    }
    let b = zero_trace.iter().map(|u| u.transfer(&level.space)).collect::<Result<_, _>>()?;
    Ok((a, b))
}

fn sandwich_check(name: &str, s: f64, levels: &[Level; 2], sets: &Sets, csv: &mut String) -> Result<Check, CliError> {
    let mut c1 = [0.0; 2];
    let mut c2 = [0.0; 2];
    let mut rows_hold = true;
    for (k, level) in levels.iter().enumerate() {
        let mut rows = Vec::new();
        for (i, u) in sets[k].0.iter().enumerate() {
            let q = quotient_norm(&level.ctx, u, s, level.gram(s))?;
            let dn = level.dual(s).norm(u)?;
            let w = weighted_gradient_norm(&level.ctx, u, s, Weight::Exact)?;
            writeln!(csv, "{s},{k},{},{i},{q:.12e},{dn:.12e},{w:.12e}", level.space.dof_count()).unwrap();
            rows.push((q, dn, w));
        }
        c1[k] = rows.iter().map(|r| r.0 / r.1).fold(0.0, f64::max);
        c2[k] = c1[k] * rows.iter().map(|r| r.1 / r.2).fold(0.0, f64::max);
        let slack = 1.0 + 1e-12;
        rows_hold &= rows.iter().all(|&(q, dn, w)| q <= c1[k] * dn * slack && c1[k] * dn <= c2[k] * w * slack);
    }
    let (d1, d2) = (drift(c1[0], c1[1]), drift(c2[0], c2[1]));
    Ok(Check::judged(
        name,
        rows_hold && d1 < MAX_DRIFT && d2 < MAX_DRIFT,
        vec![("c1_coarse", c1[0]), ("c1_fine", c1[1]), ("c2_coarse", c2[0]), ("c2_fine", c2[1]), ("c1_drift", d1), ("c2_drift", d2)],
        format!("drift bound {MAX_DRIFT}"),
    ))
}

fn hardy_check(s: f64, levels: &[Level; 2], sets: &Sets) -> Result<Check, CliError> {
    let mut c = [0.0; 2];
    for (k, level) in levels.iter().enumerate() {
        for u in &sets[k].1 {
            let (_, _, ratio) = hardy_ratio(&level.ctx, u, s, level.gram(s))?;
            c[k] = f64::max(c[k], ratio);
        }
    }
    let dr = drift(c[0], c[1]);
    Ok(Check::judged(
        &format!("hardy_s{s}"),
        c[0].is_finite() && dr < MAX_DRIFT,
        vec![("c_coarse", c[0]), ("c_fine", c[1]), ("drift", dr)],
        format!("drift bound {MAX_DRIFT}"),
    ))
}

/// `h00_half_norm / dual_gradient_norm(·, 1/2)` stays within stable bounds for zero-trace functions.
fn h00_check(levels: &[Level; 2], sets: &Sets) -> Result<Check, CliError> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [0.0f64; 2];
    for (k, level) in levels.iter().enumerate() {
        for u in &sets[k].1 {
            let h = h00_half_norm(&level.ctx, u, level.gram(0.5))?;
            let dn = level.dual(0.5).norm(u)?;
            lo[k] = lo[k].min(h / dn);
            hi[k] = hi[k].max(h / dn);
        }
    }
    let (dl, dh) = (drift(lo[0], lo[1]), drift(hi[0], hi[1]));
    Ok(Check::judged(
        "h00_equivalence",
        dl < MAX_DRIFT && dh < MAX_DRIFT,
        vec![("min_coarse", lo[0]), ("min_fine", lo[1]), ("max_coarse", hi[0]), ("max_fine", hi[1])],
        format!("drift bound {MAX_DRIFT}"),
    ))
}

/// Every norm scales with `|a|` for three scalings.
fn homogeneity_check(level: &Level, u: &FeFunction<f64>) -> Result<Check, CliError> {
    let norms = |level: &Level, v: &FeFunction<f64>| -> Result<Vec<f64>, CliError> {
        let c = classical_norms(&level.ctx, v);
        Ok(vec![
            c.l2,
            c.h1_semi,
            weighted_gradient_norm(&level.ctx, v, 0.5, Weight::Exact)?,
            quotient_norm(&level.ctx, v, 0.5, level.gram(0.5))?,
            level.dual(0.5).norm(v)?,
        ])
    };
    let base = norms(level, u)?;
    let mut worst = 0.0f64;
    for a in [-2.5, 0.3, 7.0] {
        let scaled = norms(level, &u.scaled(a))?;
        for (b, v) in base.iter().zip(&scaled) {
            worst = worst.max((v - a.abs() * b).abs() / (a.abs() * b));
        }
    }
    Ok(Check::judged("homogeneity", worst < 1e-12, vec![("max_relative_error", worst)], "bound 1e-12"))
}

/// At `s = 1` the dual norm equals `‖∇u‖`.
fn dual_s1_check(level: &Level, u: &FeFunction<f64>) -> Result<Check, CliError> {
    let grad = classical_norms(&level.ctx, u).h1_semi;
    let dn = level.dual(1.0).norm(u)?;
    let err = (dn - grad).abs() / grad;
    Ok(Check::judged("dual_s1", err < 1e-10, vec![("dual", dn), ("grad_l2", grad), ("relative_error", err)], "bound 1e-10"))
}
