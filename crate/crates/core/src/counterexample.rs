//! The sawtooth counterexample: a function of `y` alone whose tangential
//! derivative on the zigzag boundary has unbounded L² norm as the teeth
//! shrink, and its harmonic correction computed by finite elements.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{build_space, poincare_constant, solve_dirichlet_with, weak_laplacian_residual_with};
use crate::fem::{Deriv, Difference, Evaluated, FemError, Field, Jet, MeshQuadrature, Source};
use crate::geometry::{make_sawtooth, GeometryError, Point2, SawtoothParams, GAMMA_EPS_TAG};
use crate::meshing::{triangulate_sized, MeshError};
use crate::norms::{boundary_norms, classical_norms, weighted_hessian_norm, EdgeRule, NormContext, NormError};
use crate::quadrature::{integrate_adaptive, QuadratureError};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterexampleError {
    #[error("y = {0} is outside the range where the function is defined")]
    OutOfRange(f64),
    #[error("k list must be non-empty and strictly increasing, got {0:?}")]
    BadKList(Vec<u32>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 needs a positive argument");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // modified Lentz evaluation of the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// `v(x, y) = ∫_0^y ds ∫_{1/2}^s dt/(t ln t)`, defined for `0 <= y < 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NecasField;

impl NecasField {
    fn check(y: f64, allow_zero: bool) -> Result<(), CounterexampleError> {
        let ok = if allow_zero { (0.0..1.0).contains(&y) } else { y > 0.0 && y < 1.0 };
        if ok {
            Ok(())
        } else {
            Err(CounterexampleError::OutOfRange(y))
        }
    }

    /// Closed form `y ln(-ln y) + E1(-ln y) - y ln(ln 2)`, zero at `y = 0`.
    pub fn value<T: Real>(y: T) -> Result<T, CounterexampleError> {
        let yf = y.as_f64();
        Self::check(yf, true)?;
        if yf == 0.0 {
            return Ok(T::zero());
        }
        let l = -yf.ln();
        Ok(T::of(yf * l.ln() + exp_integral_e1(l) - yf * 2f64.ln().ln()))
    }

    /// `v_y = ln(-ln y) - ln(ln 2)`.
    pub fn dy<T: Real>(y: T) -> Result<T, CounterexampleError> {
        Self::check(y.as_f64(), false)?;
        Ok((-y.ln()).ln() - T::LN_2().ln())
    }

    /// `v_yy = 1/(y ln y)`, negative on `(0, 1)`.
    pub fn dyy<T: Real>(y: T) -> Result<T, CounterexampleError> {
        Self::check(y.as_f64(), false)?;
        Ok(T::one() / (y * y.ln()))
    }

    /// `v(y)` by adaptive quadrature of `v_y` from 0, for cross-checking the closed form.
    pub fn value_by_quadrature(y: f64) -> Result<f64, CounterexampleError> {
        Self::check(y, true)?;
        Ok(integrate_adaptive(|t: f64| Self::dy(t).unwrap_or(0.0), 0.0, y, 1e-14, 1e-13)?)
    }

    /// `v_y(y) = -∫_y^{1/2} dt/(t |ln t|)` by adaptive quadrature (for `y < 1/2`).
    pub fn dy_by_quadrature(y: f64) -> Result<f64, CounterexampleError> {
        Self::check(y, false)?;
        let f = |t: f64| 1.0 / (t * t.ln().abs());
        Ok(integrate_adaptive(f, y, 0.5, 1e-14, 1e-13)?)
    }

    pub fn eval<T: Real>(p: Point2<T>, deriv: Deriv) -> Result<Evaluated<T>, CounterexampleError> {
        Ok(match deriv {
            Deriv::Value => Evaluated::Value(Self::value(p.y)?),
            Deriv::Grad => Evaluated::Grad(Point2::new(T::zero(), Self::dy(p.y)?)),
            Deriv::Hess => Evaluated::Hess([[T::zero(), T::zero()], [T::zero(), Self::dyy(p.y)?]]),
        })
    }
}

impl<T: Real> Field<T> for NecasField {
    /// Points with `y <= 0` only occur on the zigzag valleys; they are moved to
    /// the smallest positive `y`.
    fn jet(&self, _elem: usize, _l: [T; 3], p: Point2<T>) -> Jet<T> {
        let y = p.y.max(T::min_positive_value());
        let vyy = Self::dyy(y).unwrap_or(T::zero());
        Jet {
            value: Self::value(y).unwrap_or(T::zero()),
            grad: Point2::new(T::zero(), Self::dy(y).unwrap_or(T::zero())),
            hess: [[T::zero(), T::zero()], [T::zero(), vyy]],
        }
    }

    fn has_hessian(&self) -> bool {
        true
    }
}

/// `I_ε = ∫_0^ε v_y(x)² dx` by adaptive quadrature, and the lower bound `(ε/2) ln(-ln ε)²`.
pub fn i_eps(eps: f64) -> Result<(f64, f64), CounterexampleError> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(CounterexampleError::OutOfRange(eps));
    }
    let v = integrate_adaptive(|x: f64| NecasField::dy(x).map(|d| d * d).unwrap_or(0.0), 0.0, eps, 1e-15, 1e-12)?;
    let l = (-eps.ln()).ln();
    Ok((v, 0.5 * eps * l * l))
}

/// Lower bound `ln(-ln ε) / (2√2)` for the tangential trace norm.
pub fn trace_lower_bound(eps: f64) -> f64 {
    (-eps.ln()).ln() / (2.0 * 2f64.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMethod {
    /// Periodicity reduction to `I_ε`: every tooth edge contributes `I_ε / √2`.
    Analytic,
    /// Edge-by-edge adaptive quadrature of `(∇v·τ)²` along the zigzag.
    Quadrature,
}

/// `‖∂_τ v‖_{L²(Γ_ε)}` with arc-length measure.
pub fn tangential_trace_norm(params: SawtoothParams, method: TraceMethod) -> Result<f64, CounterexampleError> {
    let eps: f64 = params.eps();
    match method {
        TraceMethod::Analytic => {
            let (i, _) = i_eps(eps)?;
            Ok((2f64.sqrt() * i / (4.0 * eps)).sqrt())
        }
        TraceMethod::Quadrature => {
            let d = make_sawtooth::<f64>(params)?;
            let mut total = 0.0;
            for seg in d.boundary_parametrization(Some(GAMMA_EPS_TAG))? {
                let f = |t: f64| {
                    let p = seg.start.lerp(seg.end, t);
                    let g = NecasField::dy(p.y.max(f64::MIN_POSITIVE)).unwrap_or(0.0);
                    let dt = g * seg.tangent.y;
                    dt * dt
                };
                total += seg.length * integrate_adaptive(f, 0.0, 1.0, 1e-15, 1e-11)?;
            }
            Ok(total.sqrt())
        }
    }
}

/// Mesh and discretisation settings for the harmonic correction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionConfig {
    /// Largest element size away from the zigzag.
    pub h_max: f64,
    /// Elements along each tooth edge.
    pub elems_per_edge: usize,
    /// Growth rate of the element size with height above the teeth.
    pub grading: f64,
    pub order: usize,
    pub quad_degree: usize,
    pub boundary_levels: usize,
    /// Also compute the discrete Poincaré constant (P1 on the same mesh).
    pub poincare: bool,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self { h_max: 1.0 / 32.0, elems_per_edge: 8, grading: 0.4, order: 2, quad_degree: 6, boundary_levels: 3, poincare: true }
    }
}

/// Norms of `w_ε = v - u_ε` on one sawtooth domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionReport {
    pub k: u32,
    pub eps: f64,
    pub l2_w: f64,
    pub wh2_w: f64,
    pub boundary_l2_w: f64,
    pub boundary_h1_w: f64,
    pub l2_v: f64,
    pub wh2_v: f64,
    pub dofs: usize,
    pub triangles: usize,
    /// Discrete Laplacian residual of `I_h v - u_h` with zero source.
    pub residual: f64,
    /// Residual of `I_h v` against the exact source, the consistency error of the solve.
    pub consistency: f64,
    pub poincare: Option<f64>,
    pub solver_iterations: usize,
}

/// Solves `-Δu = -v_yy`, `u = 0` on the boundary of the sawtooth domain and measures `w = v - u_h`.
pub fn corrected_harmonic(params: SawtoothParams, cfg: &CorrectionConfig) -> Result<CorrectionReport, CounterexampleError> {
    let eps: f64 = params.eps();
    let d = make_sawtooth::<f64>(params)?;
    let seg = 2f64.sqrt() * eps / cfg.elems_per_edge as f64;
    let size = |p: Point2<f64>| cfg.h_max.min(seg + cfg.grading * (p.y - eps).max(0.0));
    let mesh = triangulate_sized(&d, cfg.h_max, &size)?;
    let triangles = mesh.num_triangles();
    let space = build_space(Arc::new(mesh), cfg.order)?;
    let quad = MeshQuadrature::new(space.mesh(), cfg.quad_degree, cfg.boundary_levels);
    let f = |p: Point2<f64>| -NecasField::dyy(p.y.max(f64::MIN_POSITIVE)).unwrap_or(0.0);
    let (u, info) = solve_dirichlet_with(&space, &Source::Function(&f), &|_| 0.0, &quad)?;
    let v = NecasField;
    let w = Difference { a: &v, b: &u };
    let ctx = NormContext::new(&space, cfg.quad_degree, cfg.boundary_levels);
    let l2_w = classical_norms(&ctx, &w).l2;
    let wh2_w = weighted_hessian_norm(&ctx, &w, 0.5)?;
    let l2_v = classical_norms(&ctx, &v).l2;
    let wh2_v = weighted_hessian_norm(&ctx, &v, 0.5)?;
    let b = boundary_norms(&ctx, &w, Some(GAMMA_EPS_TAG), EdgeRule::Adaptive(1e-10))?;
    let iv = space.interpolate(|p| NecasField::value(p.y.max(0.0)).unwrap_or(0.0));
    let wh = iv.sub(&u);
    let residual = weak_laplacian_residual_with(&space, &wh, &Source::Zero, &quad)?;
    let consistency = weak_laplacian_residual_with(&space, &iv, &Source::Function(&f), &quad)?;
    let poincare = if cfg.poincare {
        let p1 = build_space(space.mesh().clone(), 1)?;
        Some(poincare_constant(&p1)?)
    } else {
        None
    };
    Ok(CorrectionReport {
        k: params.k(),
        eps,
        l2_w,
        wh2_w,
        boundary_l2_w: b.l2,
        boundary_h1_w: b.h1_semi,
        l2_v,
        wh2_v,
        dofs: space.dof_count(),
        triangles,
        residual,
        consistency,
        poincare,
        solver_iterations: info.iterations,
    })
}

/// One row of the blow-up table.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupRow {
    pub report: CorrectionReport,
    /// Analytic value of `‖∂_τ v‖_{L²(Γ_ε)}`.
    pub trace_analytic: f64,
    pub bound: f64,
    pub runtime_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupSeries {
    pub rows: Vec<BlowupRow>,
}

pub const BLOWUP_CSV_HEADER: &str = "k,eps,bnorm_h1_gamma,bound,l2_w,wh2_w,l2_v,mesh_dofs,runtime_s";

/// Runs [`corrected_harmonic`] for every `k` (ascending); wall-clock times are recorded only when `timing` is set.
pub fn blowup_study(ks: &[u32], cfg: &CorrectionConfig, timing: bool, parallel: bool) -> Result<BlowupSeries, CounterexampleError> {
    if ks.windows(2).any(|w| w[0] >= w[1]) || ks.is_empty() {
        return Err(CounterexampleError::BadKList(ks.to_vec()));
    }
    let row = |k: u32| {
        let start = Instant::now();
        let params = SawtoothParams::new(k)?;
        let report = corrected_harmonic(params, cfg)?;
        let trace_analytic = tangential_trace_norm(params, TraceMethod::Analytic)?;
        let bound = trace_lower_bound(report.eps);
        let runtime_s = timing.then(|| start.elapsed().as_secs_f64());
        Ok(BlowupRow { report, trace_analytic, bound, runtime_s })
    };
    let rows: Vec<Result<BlowupRow, CounterexampleError>> =
        if parallel { ks.par_iter().map(|&k| row(k)).collect() } else { ks.iter().map(|&k| row(k)).collect() };
    Ok(BlowupSeries { rows: rows.into_iter().collect::<Result<_, _>>()? })
}

impl BlowupSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(BLOWUP_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let c = &r.report;
            write!(
                s,
                "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},",
                c.k, c.eps, c.boundary_h1_w, r.bound, c.l2_w, c.wh2_w, c.l2_v, c.dofs
            )
            .unwrap();
            match r.runtime_s {
                Some(t) => writeln!(s, "{t:.3}").unwrap(),
                None => s.push_str("NA\n"),
            }
        }
        s
    }

    /// Least-squares slope of the boundary norm against `ln(-ln ε)`.
    pub fn slope(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.rows.iter().map(|r| ((-r.report.eps.ln()).ln(), r.report.boundary_h1_w)).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    }

    /// Line plot of the measured boundary norm and the lower bound against `ln(-ln ε)`.
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (640.0, 420.0, 60.0);
        let xs: Vec<f64> = self.rows.iter().map(|r| (-r.report.eps.ln()).ln()).collect();
        let meas: Vec<f64> = self.rows.iter().map(|r| r.report.boundary_h1_w).collect();
        let bound: Vec<f64> = self.rows.iter().map(|r| r.bound).collect();
        let (x0, x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let y1 = meas.iter().chain(&bound).fold(0.0f64, |a, &b| a.max(b)) * 1.1;
        let span = if x1 > x0 { x1 - x0 } else { 1.0 };
        let px = |x: f64| m + (x - x0) / span * (w - 2.0 * m);
        let py = |y: f64| h - m - y / y1.max(1e-300) * (h - 2.0 * m);
        let poly = |ys: &[f64]| xs.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
        writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m).unwrap();
        writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m).unwrap();
        writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, poly(&meas)).unwrap();
        writeln!(s, r#"<polyline fill="none" stroke="firebrick" stroke-dasharray="6,4" stroke-width="2" points="{}"/>"#, poly(&bound)).unwrap();
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, px(xs[i]), py(meas[i])).unwrap();
            writeln!(s, r#"<text x="{:.2}" y="{}" font-size="11" text-anchor="middle">k={}</text>"#, px(xs[i]), h - m + 16.0, r.report.k).unwrap();
        }
        writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">ln(-ln eps)</text>"#, w / 2.0, h - 12.0).unwrap();
        writeln!(s, r#"<text x="{m}" y="{}" font-size="13">tangential trace norm (solid) and lower bound (dashed)</text>"#, m - 20.0).unwrap();
        s.push_str("</svg>\n");
        s
    }
}
