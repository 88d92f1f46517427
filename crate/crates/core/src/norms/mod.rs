//! Integer, fractional, weighted, dual and boundary norms of finite element
//! functions and closed forms.

mod dual;
mod gagliardo;
mod identities;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::fem::{FeFunction, FeSpace, FemError, Field, MeshQuadrature};
use crate::geometry::{Domain, Point2};
use crate::linalg::SolverError;
use crate::meshing::{EdgeGeometry, Mesh, MeshError};
use crate::quadrature::{gauss_legendre, integrate_adaptive, QuadratureError};
use crate::scalar::{ordered_sum, Real};

pub use dual::{dual_gradient_norm, DualNormOperator, DualVariant};
pub use gagliardo::{gagliardo_gram, gagliardo_seminorm_sq, FractionalGram, GagliardoOptions, Seminorm, SeminormPart};
pub use identities::{boundary_integral, green_identity, necas_quantities, rellich_identity, IdentityCheck, NecasQuantities};

/// Largest Gram matrix assembled densely.
pub const MAX_GRAM_DOFS: usize = 3000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudgetExceeded(String),
    #[error("divergent double integral: {0}")]
    Divergent(String),
    #[error("Sobolev index {0} is outside the admissible range")]
    BadIndex(f64),
    #[error("second derivatives are not available for this function")]
    HessOnP1,
    #[error("function has boundary value {0:e}, expected zero trace")]
    NonzeroTrace(f64),
    #[error("vector field has h.n = {value:e} <= 0 on boundary edge {edge}")]
    BadVectorField { edge: usize, value: f64 },
    #[error("unknown boundary tag `{0}`")]
    UnknownTag(String),
    #[error("Gram matrix with {dofs} dofs exceeds the dense limit {limit}")]
    GramAssemblyBudget { dofs: usize, limit: usize },
    #[error("the regularized distance needs the polygon attached to the context")]
    NeedsDomain,
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

impl From<MeshError> for NormError {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::UnknownTag(t) => NormError::UnknownTag(t),
            e => NormError::Fem(FemError::Mesh(e)),
        }
    }
}

/// Sobolev exponent in `[0, 2]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub fn new(s: f64) -> Result<Self, NormError> {
        if (0.0..=2.0).contains(&s) {
            Ok(Self(s))
        } else {
            Err(NormError::BadIndex(s))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `s = 1/2` and `s = 3/2`, where zero-trace spaces need the weighted norm.
    pub fn is_critical(self) -> bool {
        (self.0 - 0.5).abs() < 1e-12 || (self.0 - 1.5).abs() < 1e-12
    }
}

/// Distance weight for weighted norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// Exact distance to the boundary.
    Exact,
    /// Smooth soft-min of the edge distances of the polygon.
    Regularized,
}

/// Rule for integrals along boundary edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeRule {
    Gauss(usize),
    /// Adaptive Gauss-Kronrod with the given relative tolerance per edge.
    Adaptive(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalNorms<T> {
    pub l2: T,
    pub h1_semi: T,
    pub h1: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNorms<T> {
    pub l2: T,
    pub h1_semi: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceCheck<T> {
    pub lhs: T,
    pub rhs: T,
    /// `lhs / rhs`, or zero when both sides vanish.
    pub ratio: T,
}

/// Mesh, quadrature and optional polygon shared by the single-integral norms.
pub struct NormContext<T> {
    space: Arc<FeSpace<T>>,
    quad: MeshQuadrature<T>,
    degree: usize,
    boundary_levels: usize,
    domain: Option<Domain<T>>,
    edge_elem: HashMap<[usize; 2], (usize, [usize; 2])>,
}

impl<T: Real> NormContext<T> {
    /// Context on the mesh of `space` with a rule of the given degree, refined
    /// `boundary_levels` times on elements touching the boundary.
    pub fn new(space: &Arc<FeSpace<T>>, degree: usize, boundary_levels: usize) -> Self {
        let mesh = space.mesh();
        let mut edge_elem = HashMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_elem.insert([a.min(b), a.max(b)], (t, if a < b { [k, (k + 1) % 3] } else { [(k + 1) % 3, k] }));
            }
        }
        Self {
            space: space.clone(),
            quad: MeshQuadrature::new(mesh, degree, boundary_levels),
            degree,
            boundary_levels,
            domain: None,
            edge_elem,
        }
    }

    /// Context with the default rule for the space and three boundary refinements.
    pub fn for_space(space: &Arc<FeSpace<T>>) -> Self {
        Self::new(space, 2 * space.order() + 2, 3)
    }

    /// Attaches the polygon, needed for the regularized distance.
    pub fn with_domain(mut self, d: Domain<T>) -> Self {
        self.domain = Some(d);
        self
    }

    pub fn space(&self) -> &Arc<FeSpace<T>> {
        &self.space
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        self.space.mesh()
    }

    pub fn quadrature(&self) -> &MeshQuadrature<T> {
        &self.quad
    }

    /// Quadrature degree and boundary refinement levels.
    pub fn quad_level(&self) -> (usize, usize) {
        (self.degree, self.boundary_levels)
    }

    pub fn integrate<F>(&self, f: F) -> T
    where
        F: Fn(usize, [T; 3], Point2<T>) -> T + Sync + Send,
    {
        self.space.integrate(&self.quad, f)
    }

    fn distance(&self, p: Point2<T>) -> T {
        self.space.distance_to_boundary(p)
    }

    fn weight_fn(&self, w: Weight) -> Result<Box<dyn Fn(Point2<T>) -> T + Sync + Send + '_>, NormError> {
        match w {
            Weight::Exact => Ok(Box::new(move |p| self.distance(p))),
            Weight::Regularized => {
                let d = self.domain.as_ref().ok_or(NormError::NeedsDomain)?;
                Ok(Box::new(move |p| d.regularized_distance(p)))
            }
        }
    }

    fn check_same_mesh(&self, u: &FeFunction<T>) -> Result<(), NormError> {
        if Arc::ptr_eq(u.space.mesh(), self.mesh()) || *u.space.mesh().as_ref() == *self.mesh().as_ref() {
            Ok(())
        } else {
            Err(NormError::Unsupported("function lives on a different mesh than the context".into()))
        }
    }

    /// Element and local vertex pair carrying a boundary edge.
    fn edge_element(&self, e: &EdgeGeometry<T>) -> (usize, [usize; 2]) {
        let [a, b] = e.nodes;
        let (t, loc) = self.edge_elem[&[a.min(b), a.max(b)]];
        if a < b {
            (t, loc)
        } else {
            (t, [loc[1], loc[0]])
        }
    }
}

/// `(‖u‖, ‖∇u‖, ‖u‖_{H¹})` over the context mesh.
pub fn classical_norms<T: Real>(ctx: &NormContext<T>, u: &dyn Field<T>) -> ClassicalNorms<T> {
    let l2 = ctx.integrate(|t, l, p| {
        let v = u.jet(t, l, p).value;
        v * v
    });
    let h1 = ctx.integrate(|t, l, p| u.jet(t, l, p).grad.norm_sq());
    ClassicalNorms { l2: l2.sqrt(), h1_semi: h1.sqrt(), h1: (l2 + h1).sqrt() }
}

/// Mean value `∫u / |Ω|`.
pub fn mean_value<T: Real>(ctx: &NormContext<T>, u: &dyn Field<T>) -> T {
    ctx.integrate(|t, l, p| u.jet(t, l, p).value) / ctx.integrate(|_, _, _| T::one())
}

/// `‖w^{1-s} ∇u‖` with `w` the exact or regularized distance to the boundary.
pub fn weighted_gradient_norm<T: Real>(ctx: &NormContext<T>, u: &dyn Field<T>, s: T, weight: Weight) -> Result<T, NormError> {
    if !(s >= T::zero() && s <= T::one()) {
        return Err(NormError::BadIndex(s.as_f64()));
    }
    let e = T::of(2.0) * (T::one() - s);
    if e == T::zero() {
        return Ok(ctx.integrate(|t, l, p| u.jet(t, l, p).grad.norm_sq()).sqrt());
    }
    let w = ctx.weight_fn(weight)?;
    Ok(ctx.integrate(|t, l, p| w(p).powf(e) * u.jet(t, l, p).grad.norm_sq()).sqrt())
}

/// `(∫ ϱ^{2β} |∇²u|²)^{1/2}` with the Frobenius norm of the Hessian.
pub fn weighted_hessian_norm<T: Real>(ctx: &NormContext<T>, u: &dyn Field<T>, beta: T) -> Result<T, NormError> {
    if !u.has_hessian() {
        return Err(NormError::HessOnP1);
    }
    let e = T::of(2.0) * beta;
    Ok(ctx.integrate(|t, l, p| ctx.distance(p).powf(e) * u.jet(t, l, p).hess_frobenius_sq()).sqrt())
}

/// `(‖u - ū‖² + |u|²_{H^s})^{1/2}`, the distance of `u` to the constants in `H^s`.
pub fn quotient_norm<'a, T: Real>(ctx: &NormContext<T>, u: &FeFunction<T>, s: T, semi: impl Into<Seminorm<'a, T>>) -> Result<T, NormError> {
    if !(s >= T::zero() && s <= T::one()) {
        return Err(NormError::BadIndex(s.as_f64()));
    }
    ctx.check_same_mesh(u)?;
    let mean = mean_value(ctx, u);
    let l2 = ctx.integrate(|t, l, p| {
        let v = u.jet(t, l, p).value - mean;
        v * v
    });
    let semi = if s == T::zero() {
        T::zero()
    } else if s == T::one() {
        ctx.integrate(|t, l, p| u.jet(t, l, p).grad.norm_sq())
    } else {
        semi.into().eval(u, s)?
    };
    Ok((l2 + semi).sqrt())
}

fn check_zero_trace<T: Real>(u: &FeFunction<T>) -> Result<(), NormError> {
    for &i in u.space.boundary_dofs() {
        if u.coeffs[i].abs().as_f64() > 1e-12 {
            return Err(NormError::NonzeroTrace(u.coeffs[i].as_f64()));
        }
    }
    Ok(())
}

/// `(‖u‖²_{H^{1/2}} + ‖u/√ϱ‖²)^{1/2}` for zero-trace `u`.
pub fn h00_half_norm<'a, T: Real>(ctx: &NormContext<T>, u: &FeFunction<T>, semi: impl Into<Seminorm<'a, T>>) -> Result<T, NormError> {
    check_zero_trace(u)?;
    ctx.check_same_mesh(u)?;
    let (l2, weighted) = {
        let l2 = ctx.integrate(|t, l, p| {
            let v = u.jet(t, l, p).value;
            v * v
        });
        let w = ctx.integrate(|t, l, p| {
            let v = u.jet(t, l, p).value;
            let d = ctx.distance(p);
            if d > T::zero() {
                v * v / d
            } else {
                T::zero()
            }
        });
        (l2, w)
    };
    let semi = semi.into().eval(u, T::of(0.5))?;
    Ok((l2 + semi + weighted).sqrt())
}

/// Hardy quotient: `(‖u/ϱ^s‖, |u|_{H^s}, ratio)` for zero-trace `u` and `0 < s < 1`.
pub fn hardy_ratio<'a, T: Real>(ctx: &NormContext<T>, u: &FeFunction<T>, s: T, semi: impl Into<Seminorm<'a, T>>) -> Result<(T, T, T), NormError> {
    check_zero_trace(u)?;
    ctx.check_same_mesh(u)?;
    let e = T::of(2.0) * s;
    let lhs = ctx
        .integrate(|t, l, p| {
            let v = u.jet(t, l, p).value;
            let d = ctx.distance(p);
            if d > T::zero() {
                v * v / d.powf(e)
            } else {
                T::zero()
            }
        })
        .sqrt();
    let rhs = semi.into().eval(u, s)?.sqrt();
    let ratio = if rhs > T::zero() { lhs / rhs } else { T::zero() };
    Ok((lhs, rhs, ratio))
}

fn edge_integral<T: Real>(
    ctx: &NormContext<T>,
    e: &EdgeGeometry<T>,
    rule: EdgeRule,
    f: &(dyn Fn(usize, [T; 3], Point2<T>) -> T + Sync),
) -> Result<T, NormError> {
    let (t, [ia, ib]) = ctx.edge_element(e);
    let at = |tau: T| {
        let mut l = [T::zero(); 3];
        l[ia] = T::one() - tau;
        l[ib] = tau;
        f(t, l, e.start.lerp(e.end, tau))
    };
    let v = match rule {
        EdgeRule::Gauss(n) => {
            let (x, w) = gauss_legendre::<T>(n);
            let parts: Vec<T> = x.iter().zip(&w).map(|(&x, &w)| w * at(x)).collect();
            ordered_sum(&parts)
        }
        EdgeRule::Adaptive(tol) => integrate_adaptive(at, T::zero(), T::one(), T::of(1e-300).max(T::min_positive_value()), T::of(tol))?,
    };
    Ok(v * e.length)
}

/// `(‖u‖_{L²(Γ)}, ‖∂_τ u‖_{L²(Γ)})` over the boundary edges with the given tag (all edges if `None`).
pub fn boundary_norms<T: Real>(
    ctx: &NormContext<T>,
    u: &dyn Field<T>,
    tag: Option<&str>,
    rule: EdgeRule,
) -> Result<BoundaryNorms<T>, NormError> {
    let edges = ctx.mesh().boundary_edges(tag)?;
    let mut l2 = Vec::with_capacity(edges.len());
    let mut h1 = Vec::with_capacity(edges.len());
    for e in &edges {
        l2.push(edge_integral(ctx, e, rule, &|t, l, p| {
            let v = u.jet(t, l, p).value;
            v * v
        })?);
        h1.push(edge_integral(ctx, e, rule, &|t, l, p| {
            let d = u.jet(t, l, p).grad.dot(e.tangent);
            d * d
        })?);
    }
    Ok(BoundaryNorms { l2: ordered_sum(&l2).sqrt(), h1_semi: ordered_sum(&h1).sqrt() })
}

/// Checks `∫_Γ h·n u² = 2∫ u ∇u·h + ∫ u² div h` for `h = x - c`, `c` the centroid of the mesh.
pub fn trace_inequality_check<T: Real>(ctx: &NormContext<T>, u: &dyn Field<T>) -> Result<TraceCheck<T>, NormError> {
    let mesh = ctx.mesh();
    let area = mesh.total_area();
    let mut c = Point2::origin();
    for t in 0..mesh.num_triangles() {
        let v = mesh.vertices_of(t);
        c = c + (v[0] + v[1] + v[2]) * (mesh.triangle_area(t) / (T::of(3.0) * area));
    }
    let edges = mesh.boundary_edges(None)?;
    let tol = T::epsilon() * T::of(64.0) * mesh.total_area().sqrt();
    for (k, e) in edges.iter().enumerate() {
        let hn = (e.start - c).dot(e.normal);
        if hn <= tol {
            return Err(NormError::BadVectorField { edge: k, value: hn.as_f64() });
        }
    }
    let mut parts = Vec::with_capacity(edges.len());
    for e in &edges {
        let hn = (e.start - c).dot(e.normal);
        parts.push(edge_integral(ctx, e, EdgeRule::Gauss(6), &|t, l, p| {
            let v = u.jet(t, l, p).value;
            hn * v * v
        })?);
    }
    let lhs = ordered_sum(&parts);
    let rhs = ctx.integrate(|t, l, p| {
        let j = u.jet(t, l, p);
        T::of(2.0) * j.value * j.grad.dot(p - c) + T::of(2.0) * j.value * j.value
    });
    let ratio = if rhs == T::zero() && lhs == T::zero() { T::zero() } else { lhs / rhs };
    Ok(TraceCheck { lhs, rhs, ratio })
}

/// Column order of the norm report CSV.
pub const REPORT_COLUMNS: [&str; 11] = [
    "l2",
    "h1_semi",
    "h1",
    "gagliardo_sq",
    "weighted_grad",
    "weighted_hess",
    "quotient",
    "dual_grad",
    "h00_half",
    "boundary_l2",
    "boundary_h1_semi",
];

const SEMINORM_COLUMNS: [&str; 6] = ["h1_semi", "gagliardo_sq", "weighted_grad", "weighted_hess", "dual_grad", "boundary_h1_semi"];

/// Named norm values of one function on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub function: String,
    pub mesh: String,
    pub s: f64,
    pub quad_level: usize,
    pub values: BTreeMap<String, f64>,
}

impl NormReport {
    pub fn new(function: &str, mesh: &str, s: f64, quad_level: usize) -> Self {
        Self { function: function.into(), mesh: mesh.into(), s, quad_level, values: BTreeMap::new() }
    }

    /// Records a value; names outside `REPORT_COLUMNS` and negative values are rejected.
    pub fn insert(&mut self, name: &str, value: f64) -> Result<(), NormError> {
        if !REPORT_COLUMNS.contains(&name) {
            return Err(NormError::Unsupported(format!("unknown report column `{name}`")));
        }
        if !(value >= 0.0) {
            return Err(NormError::Unsupported(format!("norm `{name}` has invalid value {value}")));
        }
        self.values.insert(name.into(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// Seminorm entries that vanish, as they do for constants.
    pub fn zero_seminorms(&self) -> Vec<&str> {
        SEMINORM_COLUMNS.iter().copied().filter(|c| self.values.get(*c) == Some(&0.0)).collect()
    }

    pub fn csv_header() -> String {
        let mut s = String::from("function,mesh,s,quad_level");
        for c in REPORT_COLUMNS {
            s.push(',');
            s.push_str(c);
        }
        s
    }

    /// One CSV row; missing values are left empty.
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(s, "{},{},{},{}", self.function, self.mesh, self.s, self.quad_level).unwrap();
        for c in REPORT_COLUMNS {
            s.push(',');
            if let Some(v) = self.values.get(c) {
                write!(s, "{v:.12e}").unwrap();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests;
