//! P1/P2 Lagrange finite elements on triangle meshes.

use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Point2, SegmentDistance};
use crate::linalg::{solve_spd, CsrMatrix, SolveInfo, SolverError};
use crate::meshing::{Locator, Mesh, MeshError};
use crate::quadrature::TriangleRule;
use crate::scalar::{ordered_sum, Real};

/// Elements per parallel assembly chunk.
const CHUNK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("finite element order must be 1 or 2, got {0}")]
    BadOrder(usize),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("linear solve failed: {0}")]
    SolverFailure(#[from] SolverError),
    #[error("point ({0}, {1}) lies outside the mesh")]
    OutsideMesh(f64, f64),
    #[error("second derivatives of P1 functions are not defined pointwise")]
    HessOnP1,
    #[error("coefficient vector has length {got}, space has {expected} dofs")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("function file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Affine data of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElemGeom<T> {
    pub verts: [Point2<T>; 3],
    pub area: T,
    /// Gradients of the barycentric coordinates.
    pub grad_l: [Point2<T>; 3],
}

impl<T: Real> ElemGeom<T> {
    pub fn new(verts: [Point2<T>; 3]) -> Self {
        let area = (verts[1] - verts[0]).cross(verts[2] - verts[0]) * T::of(0.5);
        let inv = T::one() / (area * T::of(2.0));
        let grad_l = [0, 1, 2].map(|i| {
            let e = verts[(i + 2) % 3] - verts[(i + 1) % 3];
            Point2::new(-e.y * inv, e.x * inv)
        });
        Self { verts, area, grad_l }
    }

    pub fn point(&self, l: [T; 3]) -> Point2<T> {
        self.verts[0] * l[0] + self.verts[1] * l[1] + self.verts[2] * l[2]
    }
}

/// Local P2 edge `k` joins local vertices `EDGE_VERTS[k]`.
pub const EDGE_VERTS: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// Basis values and gradients at barycentric point `l`; P1 fills the first three slots.
pub fn basis<T: Real>(order: usize, g: &ElemGeom<T>, l: [T; 3]) -> ([T; 6], [Point2<T>; 6]) {
    let mut v = [T::zero(); 6];
    let mut d = [Point2::origin(); 6];
    if order == 1 {
        for i in 0..3 {
            v[i] = l[i];
            d[i] = g.grad_l[i];
        }
        return (v, d);
    }
    let (two, four) = (T::of(2.0), T::of(4.0));
    for i in 0..3 {
        v[i] = l[i] * (two * l[i] - T::one());
        d[i] = g.grad_l[i] * (four * l[i] - T::one());
    }
    for (k, [i, j]) in EDGE_VERTS.iter().copied().enumerate() {
        v[3 + k] = four * l[i] * l[j];
        d[3 + k] = (g.grad_l[i] * l[j] + g.grad_l[j] * l[i]) * four;
    }
    (v, d)
}

/// Constant Hessians of the P2 basis on an element.
pub fn basis_hessians<T: Real>(g: &ElemGeom<T>) -> [[[T; 2]; 2]; 6] {
    let outer = |a: Point2<T>, b: Point2<T>| [[a.x * b.x, a.x * b.y], [a.y * b.x, a.y * b.y]];
    let four = T::of(4.0);
    let mut h = [[[T::zero(); 2]; 2]; 6];
    for i in 0..3 {
        let o = outer(g.grad_l[i], g.grad_l[i]);
        h[i] = o.map(|r| r.map(|x| x * four));
    }
    for (k, [i, j]) in EDGE_VERTS.iter().copied().enumerate() {
        let (a, b) = (outer(g.grad_l[i], g.grad_l[j]), outer(g.grad_l[j], g.grad_l[i]));
        for r in 0..2 {
            for c in 0..2 {
                h[3 + k][r][c] = four * (a[r][c] + b[r][c]);
            }
        }
    }
    h
}

/// Quadrature on every element of a mesh. Elements with a vertex on the
/// boundary use a rule refined by `boundary_levels` red subdivisions, which
/// resolves weights built from the distance to the boundary.
#[derive(Debug, Clone)]
pub struct MeshQuadrature<T> {
    base: Vec<([T; 3], T)>,
    fine: Vec<([T; 3], T)>,
    boundary_elem: Vec<bool>,
}

fn subdivided_rule<T: Real>(degree: usize, levels: usize) -> Vec<([T; 3], T)> {
    let rule = TriangleRule::<T>::of_degree(degree);
    let e = |i: usize| {
        let mut b = [T::zero(); 3];
        b[i] = T::one();
        b
    };
    let mut tris = vec![[e(0), e(1), e(2)]];
    let mid = |a: [T; 3], b: [T; 3]| [0, 1, 2].map(|k| (a[k] + b[k]) * T::of(0.5));
    for _ in 0..levels {
        let mut next = Vec::with_capacity(4 * tris.len());
        for [a, b, c] in tris {
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        tris = next;
    }
    let scale = T::one() / T::of_usize(tris.len());
    let mut out = Vec::with_capacity(tris.len() * rule.len());
    for [a, b, c] in tris {
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let l = [0, 1, 2].map(|k| a[k] * p[0] + b[k] * p[1] + c[k] * p[2]);
            out.push((l, w * scale));
        }
    }
    out
}

impl<T: Real> MeshQuadrature<T> {
    pub fn new(mesh: &Mesh<T>, degree: usize, boundary_levels: usize) -> Self {
        let mut on = vec![false; mesh.num_nodes()];
        for i in mesh.boundary_nodes() {
            on[i] = true;
        }
        let boundary_elem = mesh.triangles.iter().map(|t| t.iter().any(|&i| on[i])).collect();
        Self {
            base: subdivided_rule(degree, 0),
            fine: subdivided_rule(degree, boundary_levels),
            boundary_elem,
        }
    }

    /// Same rule on every element, no boundary refinement.
    pub fn uniform(mesh: &Mesh<T>, degree: usize) -> Self {
        Self { base: subdivided_rule(degree, 0), fine: Vec::new(), boundary_elem: vec![false; mesh.num_triangles()] }
    }

    /// Barycentric points and weights (summing to one) for element `t`.
    pub fn points(&self, t: usize) -> &[([T; 3], T)] {
        if self.boundary_elem[t] {
            &self.fine
        } else {
            &self.base
        }
    }
}

/// Function value with first and second derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<T> {
    pub value: T,
    pub grad: Point2<T>,
    pub hess: [[T; 2]; 2],
}

impl<T: Real> Jet<T> {
    pub fn zero() -> Self {
        Self { value: T::zero(), grad: Point2::origin(), hess: [[T::zero(); 2]; 2] }
    }

    pub fn hess_frobenius_sq(&self) -> T {
        self.hess.iter().flatten().map(|&x| x * x).sum()
    }
}

/// Anything that can be evaluated on the elements of a mesh: finite element
/// functions, closed forms, and differences of the two.
pub trait Field<T: Real>: Sync {
    /// Jet at the point with barycentric coordinates `l` of element `elem`; `p` is that point.
    fn jet(&self, elem: usize, l: [T; 3], p: Point2<T>) -> Jet<T>;
    /// Whether `jet` returns meaningful second derivatives.
    fn has_hessian(&self) -> bool;
}

/// Closed-form field given as a jet-valued function of position.
pub struct Analytic<F> {
    f: F,
    hessian: bool,
}

impl<F> Analytic<F> {
    pub fn new(f: F) -> Self {
        Self { f, hessian: true }
    }

    /// Closed form whose `hess` entries are not populated.
    pub fn without_hessian(f: F) -> Self {
        Self { f, hessian: false }
    }
}

impl<T: Real, F: Fn(Point2<T>) -> Jet<T> + Sync> Field<T> for Analytic<F> {
    fn jet(&self, _elem: usize, _l: [T; 3], p: Point2<T>) -> Jet<T> {
        (self.f)(p)
    }

    fn has_hessian(&self) -> bool {
        self.hessian
    }
}

/// Pointwise difference `a - b`.
pub struct Difference<'a, T> {
    pub a: &'a dyn Field<T>,
    pub b: &'a dyn Field<T>,
}

impl<T: Real> Field<T> for Difference<'_, T> {
    fn jet(&self, elem: usize, l: [T; 3], p: Point2<T>) -> Jet<T> {
        let (x, y) = (self.a.jet(elem, l, p), self.b.jet(elem, l, p));
        let mut hess = x.hess;
        for r in 0..2 {
            for c in 0..2 {
                hess[r][c] -= y.hess[r][c];
            }
        }
        Jet { value: x.value - y.value, grad: x.grad - y.grad, hess }
    }

    fn has_hessian(&self) -> bool {
        self.a.has_hessian() && self.b.has_hessian()
    }
}

/// Lagrange finite element space of order 1 or 2.
#[derive(Debug)]
pub struct FeSpace<T> {
    mesh: Arc<Mesh<T>>,
    order: usize,
    geoms: Vec<ElemGeom<T>>,
    elem_dofs: Vec<[usize; 6]>,
    dof_coords: Vec<Point2<T>>,
    boundary: Vec<bool>,
    boundary_dofs: Vec<usize>,
    interior_dofs: Vec<usize>,
    stiffness: OnceLock<CsrMatrix<T>>,
    mass: OnceLock<CsrMatrix<T>>,
    locator: OnceLock<Locator<T>>,
    distance: OnceLock<SegmentDistance<T>>,
}

/// Builds the P1 or P2 space; P2 dofs are the nodes followed by the edges.
pub fn build_space<T: Real>(mesh: impl Into<Arc<Mesh<T>>>, order: usize) -> Result<Arc<FeSpace<T>>, FemError> {
    if order != 1 && order != 2 {
        return Err(FemError::BadOrder(order));
    }
    let mesh: Arc<Mesh<T>> = mesh.into();
    let nn = mesh.num_nodes();
    let geoms: Vec<ElemGeom<T>> = (0..mesh.num_triangles()).map(|t| ElemGeom::new(mesh.vertices_of(t))).collect();
    let mut dof_coords = mesh.nodes.clone();
    let mut boundary = vec![false; nn];
    for i in mesh.boundary_nodes() {
        boundary[i] = true;
    }
    let elem_dofs: Vec<[usize; 6]> = if order == 1 {
        mesh.triangles.iter().map(|t| [t[0], t[1], t[2], 0, 0, 0]).collect()
    } else {
        let (edges, per_tri) = mesh.edges();
        let mut on_boundary = vec![false; edges.len()];
        let index: std::collections::HashMap<(usize, usize), usize> =
            edges.iter().enumerate().map(|(k, e)| ((e[0], e[1]), k)).collect();
        for b in &mesh.boundary_edges {
            let [i, j] = b.nodes;
            on_boundary[index[&(i.min(j), i.max(j))]] = true;
        }
        for (k, e) in edges.iter().enumerate() {
            dof_coords.push((mesh.nodes[e[0]] + mesh.nodes[e[1]]) * T::of(0.5));
            boundary.push(on_boundary[k]);
        }
        mesh.triangles
            .iter()
            .zip(&per_tri)
            .map(|(t, e)| [t[0], t[1], t[2], nn + e[0], nn + e[1], nn + e[2]])
            .collect()
    };
    let boundary_dofs = (0..dof_coords.len()).filter(|&i| boundary[i]).collect();
    let interior_dofs = (0..dof_coords.len()).filter(|&i| !boundary[i]).collect();
    Ok(Arc::new(FeSpace {
        mesh,
        order,
        geoms,
        elem_dofs,
        dof_coords,
        boundary,
        boundary_dofs,
        interior_dofs,
        stiffness: OnceLock::new(),
        mass: OnceLock::new(),
        locator: OnceLock::new(),
        distance: OnceLock::new(),
    }))
}

/// Right-hand side of a Poisson problem.
pub enum Source<'a, T> {
    Zero,
    Function(&'a (dyn Fn(Point2<T>) -> T + Sync)),
    /// Already assembled load vector.
    LoadVector(Vec<T>),
}

/// Operators that `assemble` can build.
pub enum OperatorKind<'a, T> {
    Stiffness,
    Mass,
    /// `int w u v`, integrated with boundary-refined quadrature.
    WeightedMass(&'a (dyn Fn(Point2<T>) -> T + Sync)),
}

impl<T: Real> FeSpace<T> {
    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dof_count(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn local_dofs(&self) -> usize {
        if self.order == 1 {
            3
        } else {
            6
        }
    }

    pub fn elem_dofs(&self, t: usize) -> &[usize] {
        &self.elem_dofs[t][..self.local_dofs()]
    }

    pub fn geom(&self, t: usize) -> &ElemGeom<T> {
        &self.geoms[t]
    }

    pub fn dof_coords(&self) -> &[Point2<T>] {
        &self.dof_coords
    }

    pub fn is_boundary_dof(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior_dofs
    }

    pub fn num_elements(&self) -> usize {
        self.geoms.len()
    }

    /// Exact distance to the polygonal boundary of the mesh.
    pub fn distance_to_boundary(&self, p: Point2<T>) -> T {
        self.distance.get_or_init(|| self.mesh.boundary_distance()).distance(p)
    }

    pub fn locate(&self, p: Point2<T>) -> Option<(usize, [T; 3])> {
        self.locator.get_or_init(|| Locator::new(&self.mesh)).locate(&self.mesh, p)
    }

    /// Default rule for products of two basis functions and a smooth factor.
    pub fn default_degree(&self) -> usize {
        2 * self.order + 1
    }

    /// Runs `f` on every element in parallel and returns the results in element order.
    pub fn map_elements<R: Send, F: Fn(usize) -> R + Sync + Send>(&self, f: F) -> Vec<R> {
        (0..self.num_elements()).into_par_iter().with_min_len(CHUNK).map(f).collect()
    }

    /// `sum_K int_K f` with element contributions summed in element order.
    pub fn integrate<F>(&self, quad: &MeshQuadrature<T>, f: F) -> T
    where
        F: Fn(usize, [T; 3], Point2<T>) -> T + Sync + Send,
    {
        let parts = self.map_elements(|t| {
            let g = &self.geoms[t];
            let mut s = T::zero();
            for &(l, w) in quad.points(t) {
                s += w * f(t, l, g.point(l));
            }
            s * g.area
        });
        ordered_sum(&parts)
    }

    fn assemble_local<F>(&self, local: F) -> CsrMatrix<T>
    where
        F: Fn(usize, &mut [[T; 6]; 6]) + Sync,
    {
        let nl = self.local_dofs();
        let chunks: Vec<Vec<(usize, usize, T)>> = (0..self.num_elements())
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|ts| {
                let mut trip = Vec::with_capacity(ts.len() * nl * nl);
                for &t in ts {
                    let mut a = [[T::zero(); 6]; 6];
                    local(t, &mut a);
                    let d = self.elem_dofs(t);
                    for i in 0..nl {
                        for j in 0..nl {
                            trip.push((d[i], d[j], a[i][j]));
                        }
                    }
                }
                trip
            })
            .collect();
        let trip: Vec<_> = chunks.into_iter().flatten().collect();
        CsrMatrix::from_triplets(self.dof_count(), self.dof_count(), &trip)
    }

    fn assemble_uncached(&self, kind: &OperatorKind<'_, T>) -> Result<CsrMatrix<T>, FemError> {
        let nl = self.local_dofs();
        match kind {
            OperatorKind::Stiffness => {
                let rule = subdivided_rule::<T>(2 * (self.order - 1), 0);
                Ok(self.assemble_local(|t, a| {
                    let g = &self.geoms[t];
                    for &(l, w) in &rule {
                        let (_, d) = basis(self.order, g, l);
                        for i in 0..nl {
                            for j in 0..nl {
                                a[i][j] += w * g.area * d[i].dot(d[j]);
                            }
                        }
                    }
                }))
            }
            OperatorKind::Mass => {
                let rule = subdivided_rule::<T>(2 * self.order, 0);
                Ok(self.assemble_local(|t, a| {
                    let g = &self.geoms[t];
                    for &(l, w) in &rule {
                        let (v, _) = basis(self.order, g, l);
                        for i in 0..nl {
                            for j in 0..nl {
                                a[i][j] += w * g.area * v[i] * v[j];
                            }
                        }
                    }
                }))
            }
            OperatorKind::WeightedMass(weight) => {
                let quad = MeshQuadrature::new(&self.mesh, 2 * self.order + 1, 3);
                let bad = std::sync::atomic::AtomicBool::new(false);
                let m = self.assemble_local(|t, a| {
                    let g = &self.geoms[t];
                    for &(l, w) in quad.points(t) {
                        let wt = weight(g.point(l));
                        if !wt.is_finite() {
                            bad.store(true, std::sync::atomic::Ordering::Relaxed);
                        }
                        let (v, _) = basis(self.order, g, l);
                        for i in 0..nl {
                            for j in 0..nl {
                                a[i][j] += w * g.area * wt * v[i] * v[j];
                            }
                        }
                    }
                });
                if bad.into_inner() {
                    return Err(FemError::QuadratureFailure("weight is not finite at a quadrature point".into()));
                }
                Ok(m)
            }
        }
    }

    pub fn stiffness(&self) -> &CsrMatrix<T> {
        self.stiffness.get_or_init(|| self.assemble_uncached(&OperatorKind::Stiffness).unwrap())
    }

    pub fn mass(&self) -> &CsrMatrix<T> {
        self.mass.get_or_init(|| self.assemble_uncached(&OperatorKind::Mass).unwrap())
    }

    /// Load vector `int f phi_i`.
    pub fn load(&self, f: &Source<'_, T>, quad: &MeshQuadrature<T>) -> Result<Vec<T>, FemError> {
        match f {
            Source::Zero => Ok(vec![T::zero(); self.dof_count()]),
            Source::LoadVector(v) => {
                if v.len() != self.dof_count() {
                    return Err(FemError::Dimension { expected: self.dof_count(), got: v.len() });
                }
                Ok(v.clone())
            }
            Source::Function(func) => {
                let nl = self.local_dofs();
                let locals = self.map_elements(|t| {
                    let g = &self.geoms[t];
                    let mut b = [T::zero(); 6];
                    let mut finite = true;
                    for &(l, w) in quad.points(t) {
                        let fv = func(g.point(l));
                        finite &= fv.is_finite();
                        let (v, _) = basis(self.order, g, l);
                        for i in 0..nl {
                            b[i] += w * g.area * fv * v[i];
                        }
                    }
                    (b, finite)
                });
                let mut out = vec![T::zero(); self.dof_count()];
                for (t, (b, finite)) in locals.into_iter().enumerate() {
                    if !finite {
                        return Err(FemError::QuadratureFailure(format!("source is not finite on element {t}")));
                    }
                    for (i, &d) in self.elem_dofs(t).iter().enumerate() {
                        out[d] += b[i];
                    }
                }
                Ok(out)
            }
        }
    }

    /// Interpolates a function at the dofs.
    pub fn interpolate(self: &Arc<Self>, f: impl Fn(Point2<T>) -> T) -> FeFunction<T> {
        FeFunction { space: self.clone(), coeffs: self.dof_coords.iter().map(|&p| f(p)).collect() }
    }

    pub fn function(self: &Arc<Self>, coeffs: Vec<T>) -> Result<FeFunction<T>, FemError> {
        if coeffs.len() != self.dof_count() {
            return Err(FemError::Dimension { expected: self.dof_count(), got: coeffs.len() });
        }
        Ok(FeFunction { space: self.clone(), coeffs })
    }

    /// Local jet of a coefficient vector on element `t`.
    pub fn local_jet(&self, coeffs: &[T], t: usize, l: [T; 3]) -> Jet<T> {
        let g = &self.geoms[t];
        let (v, d) = basis(self.order, g, l);
        let dofs = self.elem_dofs(t);
        let mut jet = Jet::zero();
        for (i, &k) in dofs.iter().enumerate() {
            jet.value += coeffs[k] * v[i];
            jet.grad = jet.grad + d[i] * coeffs[k];
        }
        if self.order == 2 {
            let h = basis_hessians(g);
            for (i, &k) in dofs.iter().enumerate() {
                for r in 0..2 {
                    for c in 0..2 {
                        jet.hess[r][c] += coeffs[k] * h[i][r][c];
                    }
                }
            }
        }
        jet
    }
}

/// Builds one of the standard operators of the space.
pub fn assemble<T: Real>(space: &FeSpace<T>, kind: OperatorKind<'_, T>) -> Result<CsrMatrix<T>, FemError> {
    match kind {
        OperatorKind::Stiffness => Ok(space.stiffness().clone()),
        OperatorKind::Mass => Ok(space.mass().clone()),
        k => space.assemble_uncached(&k),
    }
}

/// Coefficients on a finite element space.
#[derive(Debug, Clone)]
pub struct FeFunction<T> {
    pub space: Arc<FeSpace<T>>,
    pub coeffs: Vec<T>,
}

impl<T: Real> Field<T> for FeFunction<T> {
    fn jet(&self, elem: usize, l: [T; 3], _p: Point2<T>) -> Jet<T> {
        self.space.local_jet(&self.coeffs, elem, l)
    }

    fn has_hessian(&self) -> bool {
        self.space.order == 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deriv {
    Value,
    Grad,
    Hess,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluated<T> {
    Value(T),
    Grad(Point2<T>),
    Hess([[T; 2]; 2]),
}

impl<T: Real> FeFunction<T> {
    pub fn scaled(&self, a: T) -> Self {
        Self { space: self.space.clone(), coeffs: self.coeffs.iter().map(|&c| c * a).collect() }
    }

    pub fn plus_constant(&self, c: T) -> Self {
        // Lagrange bases reproduce constants, so shifting all coefficients shifts the function
        Self { space: self.space.clone(), coeffs: self.coeffs.iter().map(|&x| x + c).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { space: self.space.clone(), coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| a - b).collect() }
    }

    /// Pointwise evaluation on the containing element.
    pub fn eval(&self, p: Point2<T>, deriv: Deriv) -> Result<Evaluated<T>, FemError> {
        if deriv == Deriv::Hess && self.space.order == 1 {
            return Err(FemError::HessOnP1);
        }
        let (t, l) = self.space.locate(p).ok_or(FemError::OutsideMesh(p.x.as_f64(), p.y.as_f64()))?;
        let j = self.space.local_jet(&self.coeffs, t, l);
        Ok(match deriv {
            Deriv::Value => Evaluated::Value(j.value),
            Deriv::Grad => Evaluated::Grad(j.grad),
            Deriv::Hess => Evaluated::Hess(j.hess),
        })
    }

    pub fn value_at(&self, p: Point2<T>) -> Result<T, FemError> {
        match self.eval(p, Deriv::Value)? {
            Evaluated::Value(v) => Ok(v),
            _ => unreachable!(),
        }
    }

    /// Interpolates this function onto another space (exact for nested refinements).
    pub fn transfer(&self, target: &Arc<FeSpace<T>>) -> Result<Self, FemError> {
        let coeffs = target.dof_coords.iter().map(|&p| self.value_at(p)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { space: target.clone(), coeffs })
    }

    /// Text form: `fefunction`, `mesh <path>`, `order k`, `dofs N`, then one coefficient per line.
    pub fn to_text(&self, mesh_path: &str) -> String {
        let mut s = String::new();
        writeln!(s, "fefunction\nmesh {mesh_path}\norder {}\ndofs {}", self.space.order, self.coeffs.len()).unwrap();
        for c in &self.coeffs {
            writeln!(s, "{c}").unwrap();
        }
        s
    }

    /// Parses the text form; returns the mesh path and a function on `space`.
    pub fn from_text(text: &str, space: &Arc<FeSpace<T>>) -> Result<(String, Self), FemError> {
        let mut lines = text.lines().enumerate();
        let mut next = |key: &str| -> Result<String, FemError> {
            let (k, l) = lines.next().ok_or(FemError::Parse { line: 0, msg: "truncated header".into() })?;
            let rest = if key.is_empty() { Some(l) } else { l.strip_prefix(key) };
            rest.map(|r| r.trim().to_string())
                .ok_or(FemError::Parse { line: k + 1, msg: format!("expected `{key}`") })
        };
        if next("")? != "fefunction" {
            return Err(FemError::Parse { line: 1, msg: "missing `fefunction` header".into() });
        }
        let mesh = next("mesh ")?;
        let order: usize = next("order ")?.parse().map_err(|_| FemError::Parse { line: 3, msg: "bad order".into() })?;
        let n: usize = next("dofs ")?.parse().map_err(|_| FemError::Parse { line: 4, msg: "bad count".into() })?;
        if order != space.order || n != space.dof_count() {
            return Err(FemError::Dimension { expected: space.dof_count(), got: n });
        }
        let mut coeffs = Vec::with_capacity(n);
        for (k, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            coeffs.push(l.trim().parse::<T>().map_err(|_| FemError::Parse { line: k + 1, msg: "bad coefficient".into() })?);
        }
        let f = space.function(coeffs)?;
        Ok((mesh, f))
    }
}

/// Solves `-Δu = f` with `u = g` at the boundary dofs.
pub fn solve_dirichlet<T: Real>(
    space: &Arc<FeSpace<T>>,
    f: &Source<'_, T>,
    g: &dyn Fn(Point2<T>) -> T,
) -> Result<FeFunction<T>, FemError> {
    let quad = MeshQuadrature::uniform(space.mesh(), space.default_degree() + 1);
    solve_dirichlet_with(space, f, g, &quad).map(|(u, _)| u)
}

/// [`solve_dirichlet`] with explicit source quadrature and solver diagnostics.
pub fn solve_dirichlet_with<T: Real>(
    space: &Arc<FeSpace<T>>,
    f: &Source<'_, T>,
    g: &dyn Fn(Point2<T>) -> T,
    quad: &MeshQuadrature<T>,
) -> Result<(FeFunction<T>, SolveInfo), FemError> {
    let k = space.stiffness();
    let b = space.load(f, quad)?;
    let mut u = vec![T::zero(); space.dof_count()];
    for &i in space.boundary_dofs() {
        u[i] = g(space.dof_coords[i]);
    }
    let interior = space.interior_dofs();
    if interior.is_empty() {
        return Ok((space.function(u)?, SolveInfo { iterations: 0, relative_residual: 0.0 }));
    }
    let ku = k.mul_vec(&u);
    let rhs: Vec<T> = interior.iter().map(|&i| b[i] - ku[i]).collect();
    let kii = k.submatrix(interior);
    let (x, info) = solve_spd(&kii, &rhs, T::solver_tolerance())?;
    for (&i, &v) in interior.iter().zip(&x) {
        u[i] = v;
    }
    Ok((space.function(u)?, info))
}

/// Discrete harmonic function with boundary values `g`.
pub fn harmonic_extension<T: Real>(space: &Arc<FeSpace<T>>, g: &dyn Fn(Point2<T>) -> T) -> Result<FeFunction<T>, FemError> {
    solve_dirichlet(space, &Source::Zero, g)
}

/// Residual of `-Δu = f` over the interior dofs, `sqrt(sum r_i^2 / m_ii)` with
/// `m_ii` the mass diagonal: a diagonally scaled discrete H^-1 norm.
pub fn weak_laplacian_residual<T: Real>(space: &Arc<FeSpace<T>>, u: &FeFunction<T>, f: &Source<'_, T>) -> Result<T, FemError> {
    let quad = MeshQuadrature::uniform(space.mesh(), space.default_degree() + 1);
    weak_laplacian_residual_with(space, u, f, &quad)
}

pub fn weak_laplacian_residual_with<T: Real>(
    space: &Arc<FeSpace<T>>,
    u: &FeFunction<T>,
    f: &Source<'_, T>,
    quad: &MeshQuadrature<T>,
) -> Result<T, FemError> {
    let ku = space.stiffness().mul_vec(&u.coeffs);
    let b = space.load(f, quad)?;
    let m = space.mass().diagonal();
    let s: Vec<T> = space
        .interior_dofs()
        .iter()
        .map(|&i| {
            let r = ku[i] - b[i];
            r * r / m[i]
        })
        .collect();
    Ok(ordered_sum(&s).sqrt())
}

/// Smallest `lambda` with `K x = lambda M x` on the interior dofs, by inverse
/// iteration; the discrete Poincaré constant is `1/sqrt(lambda)`.
pub fn poincare_constant<T: Real>(space: &Arc<FeSpace<T>>) -> Result<T, FemError> {
    let interior = space.interior_dofs();
    let k = space.stiffness().submatrix(interior);
    let m = space.mass().submatrix(interior);
    let mut x = vec![T::one(); interior.len()];
    let mut lambda = T::zero();
    for _ in 0..200 {
        let (y, _) = solve_spd(&k, &m.mul_vec(&x), T::solver_tolerance())?;
        let my = m.mul_vec(&y);
        let norm = crate::linalg::dot(&y, &my).sqrt();
        let new_lambda = crate::linalg::dot(&y, &k.mul_vec(&y)) / (norm * norm);
        x = y.iter().map(|&v| v / norm).collect();
        if (new_lambda - lambda).abs() <= T::of(1e-10) * new_lambda {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    Ok(T::one() / lambda.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{l_shape, unit_square};
    use crate::meshing::{refine, triangulate, BoundaryEdge};
    use std::f64::consts::PI;

    pub(crate) fn two_triangle_square() -> Mesh<f64> {
        let p = |x: f64, y: f64| Point2::new(x, y);
        let tag = |i, j| BoundaryEdge { nodes: [i, j], tag: "boundary".into() };
        let m = Mesh {
            nodes: vec![p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            boundary_edges: vec![tag(0, 1), tag(1, 2), tag(2, 3), tag(3, 0)],
            corner_nodes: vec![],
            h_max: 2f64.sqrt(),
        };
        Mesh::from_text(&m.to_text()).unwrap()
    }

    #[test]
    fn dof_counts() {
        assert_eq!(build_space(two_triangle_square(), 1).unwrap().dof_count(), 4);
        let p2 = build_space(two_triangle_square(), 2).unwrap();
        assert_eq!(p2.dof_count(), 9);
        assert_eq!(p2.boundary_dofs().len(), 8);
        assert!(matches!(build_space(two_triangle_square(), 3), Err(FemError::BadOrder(3))));
    }

    #[test]
    fn operator_sanity() {
        let m = triangulate(&l_shape::<f64>(), 0.3, 1.0).unwrap();
        for order in [1, 2] {
            let s = build_space(m.clone(), order).unwrap();
            let ones = vec![1.0; s.dof_count()];
            let k1 = s.stiffness().mul_vec(&ones);
            assert!(k1.iter().all(|v| v.abs() < 1e-12));
            assert!((s.mass().bilinear(&ones, &ones) - 3.0).abs() < 1e-12);
            assert!(s.stiffness().is_symmetric(1e-14));
            assert!(s.mass().is_symmetric(1e-14));
        }
    }

    #[test]
    fn weighted_mass_integrates_distance() {
        let m = refine(&refine(&triangulate(&unit_square::<f64>(), 0.25, 1.0).unwrap()));
        let s = build_space(m, 1).unwrap();
        let sq = unit_square::<f64>();
        let w = |p: Point2<f64>| sq.distance_to_boundary(p);
        let a = assemble(&s, OperatorKind::WeightedMass(&w)).unwrap();
        let ones = vec![1.0; s.dof_count()];
        // oracle: midpoint grid sum of the distance function
        let n = 2000;
        let mut grid = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                grid += x.min(y).min(1.0 - x).min(1.0 - y);
            }
        }
        grid /= (n * n) as f64;
        assert!((grid - 1.0 / 6.0).abs() < 1e-6);
        assert!((a.bilinear(&ones, &ones) - grid).abs() < 1e-5);
        let bad = |_: Point2<f64>| f64::INFINITY;
        assert!(matches!(assemble(&s, OperatorKind::WeightedMass(&bad)), Err(FemError::QuadratureFailure(_))));
    }

    #[test]
    fn constants_and_linears_are_reproduced() {
        let m = triangulate(&unit_square::<f64>(), 0.2, 1.0).unwrap();
        let s = build_space(m, 1).unwrap();
        let u = solve_dirichlet(&s, &Source::Zero, &|_| 1.0).unwrap();
        assert!(u.coeffs.iter().all(|c| (c - 1.0).abs() < 1e-10));
        let u = harmonic_extension(&s, &|p| p.x).unwrap();
        for (c, p) in u.coeffs.iter().zip(s.dof_coords()) {
            assert!((c - p.x).abs() < 1e-12);
        }
        let z = harmonic_extension(&s, &|_| 0.0).unwrap();
        assert!(z.coeffs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn manufactured_p1_rate() {
        let sq = unit_square::<f64>();
        let f = |p: Point2<f64>| 2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin();
        let exact = |p: Point2<f64>| (PI * p.x).sin() * (PI * p.y).sin();
        let mut m = triangulate(&sq, 0.2, 1.0).unwrap();
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for _ in 0..4 {
            let s = build_space(m.clone(), 1).unwrap();
            let u = solve_dirichlet(&s, &Source::Function(&f), &|_| 0.0).unwrap();
            let q = MeshQuadrature::uniform(s.mesh(), 6);
            let e2 = s.integrate(&q, |t, l, p| {
                let d = u.jet(t, l, p).value - exact(p);
                d * d
            });
            errs.push(e2.sqrt());
            hs.push(m.h_max);
            m = refine(&m);
        }
        for k in 1..errs.len() {
            let rate = (errs[k - 1] / errs[k]).ln() / (hs[k - 1] / hs[k]).ln();
            assert!((1.8..=2.2).contains(&rate), "rate {rate}");
        }
    }

    #[test]
    fn evaluation() {
        let m = triangulate(&unit_square::<f64>(), 0.3, 1.0).unwrap();
        let s2 = build_space(m.clone(), 2).unwrap();
        let u = s2.interpolate(|p| p.x * p.x);
        let h = u.eval(Point2::new(0.3, 0.7), Deriv::Hess).unwrap();
        let Evaluated::Hess(h) = h else { panic!() };
        assert!((h[0][0] - 2.0).abs() < 1e-10 && h[0][1].abs() < 1e-10 && h[1][1].abs() < 1e-10);
        let s1 = build_space(m, 1).unwrap();
        let x = s1.interpolate(|p| p.x);
        let Evaluated::Grad(g) = x.eval(Point2::new(0.41, 0.13), Deriv::Grad).unwrap() else { panic!() };
        assert!((g.x - 1.0).abs() < 1e-12 && g.y.abs() < 1e-12);
        assert!(matches!(x.eval(Point2::new(0.5, 0.5), Deriv::Hess), Err(FemError::HessOnP1)));
        assert!(matches!(x.eval(Point2::new(1.5, 0.5), Deriv::Value), Err(FemError::OutsideMesh(..))));
    }

    #[test]
    fn residuals() {
        let m = triangulate(&l_shape::<f64>(), 0.2, 1.0).unwrap();
        let s = build_space(m, 2).unwrap();
        let f = |p: Point2<f64>| 1.0 + p.x * p.y;
        let u = solve_dirichlet(&s, &Source::Function(&f), &|_| 0.0).unwrap();
        assert!(weak_laplacian_residual(&s, &u, &Source::Function(&f)).unwrap() <= 1e-10);
        let mut bumped = u.clone();
        bumped.coeffs[s.interior_dofs()[0]] += 1.0;
        assert!(weak_laplacian_residual(&s, &bumped, &Source::Function(&f)).unwrap() > 0.0);
        let w: Vec<f64> = (0..s.dof_count()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let load = s.stiffness().mul_vec(&w);
        let wf = s.function(w).unwrap();
        assert!(weak_laplacian_residual(&s, &wf, &Source::LoadVector(load)).unwrap() <= 1e-12);
    }

    #[test]
    fn poincare_constant_of_square() {
        // smallest Dirichlet eigenvalue of the unit square is 2 pi^2
        let m = refine(&triangulate(&unit_square::<f64>(), 0.1, 1.0).unwrap());
        let s = build_space(m, 2).unwrap();
        let c = poincare_constant(&s).unwrap();
        let exact = 1.0 / (2.0 * PI * PI).sqrt();
        assert!((c - exact).abs() < 1e-4 * exact);
    }

    #[test]
    fn function_file_round_trip() {
        let m = triangulate(&unit_square::<f64>(), 0.4, 1.0).unwrap();
        let s = build_space(m, 2).unwrap();
        let u = s.interpolate(|p| (p.x * 3.1).sin() + p.y / 7.0);
        let text = u.to_text("square.mesh");
        let (path, back) = FeFunction::from_text(&text, &s).unwrap();
        assert_eq!(path, "square.mesh");
        assert_eq!(back.coeffs, u.coeffs);
    }
}
