//! Double integrals `∬ N(x, y) |x - y|^{-(2+2s)}` over pairs of mesh elements.
//!
//! Pairs sharing a vertex are reduced exactly: the product of two simplices is
//! a cone over its facets seen from the shared vertex, and a polynomial
//! numerator lets the radial integral be done in closed form. The reduction
//! recurses until the two factors are disjoint; disjoint factors get tensor
//! Gauss rules, subdivided while they are close compared to their size.

use std::cell::Cell;
use std::sync::Arc;

use rayon::prelude::*;

use crate::fem::{basis, ElemGeom, FeFunction, FeSpace};
use crate::geometry::Point2;
use crate::linalg::{dot, DenseMatrix};
use crate::quadrature::{gauss_legendre_f64, TriangleRule};
use crate::scalar::{ordered_sum, Real};

use super::NormError;

/// Which quantity enters the difference `u(x) - u(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeminormPart {
    /// The function itself.
    Whole,
    /// Both gradient components, summed.
    Gradient,
}

/// Tiering and rule sizes for the element-pair quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct GagliardoOptions {
    /// Pairs with gap below `near_ratio * diameter` go to the subdivided near-field rule.
    pub near_ratio: f64,
    /// Pairs with gap below `far_ratio * diameter` use the 6-point rule, the rest 3 points.
    pub far_ratio: f64,
    /// Disjoint factors closer than `leaf_ratio * diameter` are subdivided.
    pub leaf_ratio: f64,
    pub max_subdivision: usize,
    pub gauss_points: usize,
    pub triangle_degree: usize,
    /// Upper limit on the number of unordered element pairs.
    pub max_pairs: usize,
}

impl Default for GagliardoOptions {
    fn default() -> Self {
        Self {
            near_ratio: 1.0,
            far_ratio: 4.0,
            leaf_ratio: 1.0,
            max_subdivision: 2,
            gauss_points: 5,
            triangle_degree: 5,
            max_pairs: 60_000_000,
        }
    }
}

/// Simplex of dimension 0, 1 or 2 in the plane.
#[derive(Debug, Clone, Copy)]
struct Simplex<T> {
    v: [Point2<T>; 3],
    dim: usize,
}

impl<T: Real> Simplex<T> {
    fn triangle(v: [Point2<T>; 3]) -> Self {
        Self { v, dim: 2 }
    }

    fn verts(&self) -> &[Point2<T>] {
        &self.v[..=self.dim]
    }

    fn opposite(&self, i: usize) -> Self {
        let mut v = [self.v[0]; 3];
        let mut k = 0;
        for (j, &p) in self.verts().iter().enumerate() {
            if j != i {
                v[k] = p;
                k += 1;
            }
        }
        Self { v, dim: self.dim - 1 }
    }

    fn centroid(&self) -> Point2<T> {
        let n = T::of_usize(self.dim + 1);
        let mut c = Point2::origin();
        for &p in self.verts() {
            c = c + p;
        }
        c * (T::one() / n)
    }

    fn radius(&self) -> T {
        let c = self.centroid();
        self.verts().iter().map(|&p| p.dist(c)).fold(T::zero(), T::max)
    }

    fn diameter(&self) -> T {
        let v = self.verts();
        let mut d = T::zero();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                d = d.max(v[i].dist(v[j]));
            }
        }
        d
    }

    fn measure(&self) -> T {
        match self.dim {
            0 => T::one(),
            1 => self.v[0].dist(self.v[1]),
            _ => ((self.v[1] - self.v[0]).cross(self.v[2] - self.v[0]) * T::of(0.5)).abs(),
        }
    }

    fn split(&self) -> Vec<Self> {
        let mid = |a: Point2<T>, b: Point2<T>| a.lerp(b, T::of(0.5));
        match self.dim {
            0 => vec![*self],
            1 => {
                let m = mid(self.v[0], self.v[1]);
                vec![Self { v: [self.v[0], m, m], dim: 1 }, Self { v: [m, self.v[1], m], dim: 1 }]
            }
            _ => {
                let [a, b, c] = self.v;
                let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]].map(Self::triangle).to_vec()
            }
        }
    }
}

/// Distance from `w` to the affine hull of a point or segment.
fn hull_distance<T: Real>(w: Point2<T>, f: &Simplex<T>) -> T {
    match f.dim {
        0 => w.dist(f.v[0]),
        _ => {
            let d = f.v[1] - f.v[0];
            ((w - f.v[0]).cross(d)).abs() / d.norm()
        }
    }
}

fn vandermonde_inverse(deg: usize) -> Vec<Vec<f64>> {
    let n = deg + 1;
    let t: Vec<f64> = (0..n).map(|k| k as f64 / deg.max(1) as f64).collect();
    // augmented [V | I], Gauss-Jordan with partial pivoting
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut row: Vec<f64> = (0..n).map(|j| t[k].powi(j as i32)).collect();
            row.extend((0..n).map(|j| if j == k { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
        a.swap(c, p);
        let piv = a[c][c];
        for x in a[c].iter_mut() {
            *x /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                let row_c = a[c].clone();
                for (x, y) in a[r].iter_mut().zip(row_c) {
                    *x -= f * y;
                }
            }
        }
    }
    a.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// Quadrature engine for one exponent `s` and numerator degree.
pub(crate) struct PairIntegrator<T> {
    neg_exp: T,
    samples: Vec<T>,
    /// Sample weights turning numerator samples into the radially integrated numerator, per dimension 0..=4.
    beta: Vec<Vec<T>>,
    /// Whether the constant term diverges in that dimension.
    singular_constant: Vec<bool>,
    gauss: Vec<(T, T)>,
    tri: Vec<([T; 3], T)>,
    leaf_ratio: T,
    max_sub: usize,
    apex_tol: T,
}

impl<T: Real> PairIntegrator<T> {
    /// `deg` bounds the degree of the numerator along rays; `apex_tol` is the
    /// size below which a numerator on the diagonal counts as zero.
    pub(crate) fn new(s: T, deg: usize, opts: &GagliardoOptions, apex_tol: T) -> Self {
        let sf = s.as_f64();
        let vinv = vandermonde_inverse(deg);
        let mut beta = Vec::new();
        let mut singular_constant = Vec::new();
        for n in 0..=4usize {
            let c: Vec<f64> = (0..=deg)
                .map(|j| {
                    let e = n as f64 - 2.0 - 2.0 * sf + j as f64;
                    if e > 0.0 {
                        1.0 / e
                    } else {
                        0.0
                    }
                })
                .collect();
            beta.push((0..=deg).map(|k| T::of((0..=deg).map(|j| vinv[j][k] * c[j]).sum())).collect());
            singular_constant.push(n as f64 - 2.0 - 2.0 * sf <= 0.0);
        }
        let (gx, gw) = gauss_legendre_f64(opts.gauss_points);
        let rule = TriangleRule::<T>::of_degree(opts.triangle_degree);
        Self {
            neg_exp: -(T::one() + s),
            samples: (0..=deg).map(|k| T::of(k as f64 / deg.max(1) as f64)).collect(),
            beta,
            singular_constant,
            gauss: gx.into_iter().zip(gw).map(|(x, w)| (T::of(x), T::of(w))).collect(),
            tri: rule.points.into_iter().zip(rule.weights).collect(),
            leaf_ratio: T::of(opts.leaf_ratio),
            max_sub: opts.max_subdivision,
            apex_tol,
        }
    }

    #[inline]
    pub(crate) fn kernel(&self, x: Point2<T>, y: Point2<T>) -> T {
        (x - y).norm_sq().powf(self.neg_exp)
    }

    fn rule(&self, a: &Simplex<T>) -> Vec<(Point2<T>, T)> {
        match a.dim {
            0 => vec![(a.v[0], T::one())],
            1 => {
                let len = a.measure();
                self.gauss.iter().map(|&(x, w)| (a.v[0].lerp(a.v[1], x), w * len)).collect()
            }
            _ => {
                let g = ElemGeom::new(a.v);
                let area = g.area.abs();
                self.tri.iter().map(|&(l, w)| (g.point(l), w * area)).collect()
            }
        }
    }

    /// Integral over the product of two simplices.
    fn pair<const M: usize>(
        &self,
        a: &Simplex<T>,
        b: &Simplex<T>,
        num: &dyn Fn(Point2<T>, Point2<T>) -> [T; M],
        fail: &Cell<bool>,
    ) -> [T; M] {
        let shared = a.verts().iter().enumerate().find_map(|(i, p)| b.verts().iter().position(|q| q == p).map(|j| (i, j)));
        let Some((ia, ib)) = shared else {
            return self.leaf(a, b, num, 0);
        };
        let n = a.dim + b.dim;
        let mut acc = [T::zero(); M];
        if n == 0 {
            return acc;
        }
        let w = a.v[ia];
        if self.singular_constant[n] && num(w, w).iter().any(|v| v.abs() > self.apex_tol) {
            fail.set(true);
            return acc;
        }
        let beta = &self.beta[n];
        let reduced = |x: Point2<T>, y: Point2<T>| {
            let mut r = [T::zero(); M];
            for (&t, &bk) in self.samples.iter().zip(beta) {
                if bk == T::zero() {
                    continue;
                }
                let v = num(w + (x - w) * t, w + (y - w) * t);
                for m in 0..M {
                    r[m] += bk * v[m];
                }
            }
            r
        };
        if a.dim > 0 {
            let f = a.opposite(ia);
            let h = hull_distance(w, &f);
            let v = self.pair(&f, b, &reduced, fail);
            for m in 0..M {
                acc[m] += h * v[m];
            }
        }
        if b.dim > 0 {
            let f = b.opposite(ib);
            let h = hull_distance(w, &f);
            let v = self.pair(a, &f, &reduced, fail);
            for m in 0..M {
                acc[m] += h * v[m];
            }
        }
        acc
    }

    /// Disjoint factors: tensor rule, subdividing the larger factor while close.
    fn leaf<const M: usize>(
        &self,
        a: &Simplex<T>,
        b: &Simplex<T>,
        num: &dyn Fn(Point2<T>, Point2<T>) -> [T; M],
        depth: usize,
    ) -> [T; M] {
        let mut acc = [T::zero(); M];
        let (da, db) = (a.diameter(), b.diameter());
        if depth < self.max_sub && (a.dim > 0 || b.dim > 0) {
            let gap = a.centroid().dist(b.centroid()) - a.radius() - b.radius();
            if gap < self.leaf_ratio * da.max(db) {
                let split_a = a.dim > 0 && (da >= db || b.dim == 0);
                let pieces = if split_a { a.split() } else { b.split() };
                for p in &pieces {
                    let v = if split_a { self.leaf(p, b, num, depth + 1) } else { self.leaf(a, p, num, depth + 1) };
                    for m in 0..M {
                        acc[m] += v[m];
                    }
                }
                return acc;
            }
        }
        let (ra, rb) = (self.rule(a), self.rule(b));
        for &(x, wx) in &ra {
            for &(y, wy) in &rb {
                let k = wx * wy * self.kernel(x, y);
                let v = num(x, y);
                for m in 0..M {
                    acc[m] += k * v[m];
                }
            }
        }
        acc
    }
}

/// Tier of an unordered element pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Tier {
    Touching,
    Near,
    Mid,
    Far,
}

/// Bounding data used to classify element pairs.
pub(crate) struct PairClassifier<T> {
    nodes: Vec<[usize; 3]>,
    centroid: Vec<Point2<T>>,
    radius: Vec<T>,
    diameter: Vec<T>,
    near: T,
    far: T,
}

impl<T: Real> PairClassifier<T> {
    pub(crate) fn new(space: &FeSpace<T>, opts: &GagliardoOptions) -> Self {
        let mesh = space.mesh();
        let simplices: Vec<Simplex<T>> = (0..mesh.num_triangles()).map(|t| Simplex::triangle(mesh.vertices_of(t))).collect();
        Self {
            nodes: mesh.triangles.clone(),
            centroid: simplices.iter().map(Simplex::centroid).collect(),
            radius: simplices.iter().map(Simplex::radius).collect(),
            diameter: simplices.iter().map(Simplex::diameter).collect(),
            near: T::of(opts.near_ratio),
            far: T::of(opts.far_ratio),
        }
    }

    pub(crate) fn tier(&self, k: usize, l: usize) -> Tier {
        if self.nodes[k].iter().any(|i| self.nodes[l].contains(i)) {
            return Tier::Touching;
        }
        let gap = self.centroid[k].dist(self.centroid[l]) - self.radius[k] - self.radius[l];
        let d = self.diameter[k].max(self.diameter[l]);
        if gap < self.near * d {
            Tier::Near
        } else if gap < self.far * d {
            Tier::Mid
        } else {
            Tier::Far
        }
    }
}

/// Barycentric coordinates of `x` with respect to the (affinely extended) element.
fn bary<T: Real>(g: &ElemGeom<T>, x: Point2<T>) -> [T; 3] {
    let l1 = g.grad_l[1].dot(x - g.verts[0]);
    let l2 = g.grad_l[2].dot(x - g.verts[0]);
    [T::one() - l1 - l2, l1, l2]
}

fn check_exponent<T: Real>(s: T) -> Result<(), NormError> {
    if !(s > T::zero() && s < T::one()) {
        return Err(NormError::BadIndex(s.as_f64()));
    }
    Ok(())
}

/// Values (or gradients) at the points of a fixed element rule.
struct Sampled<T> {
    points: Vec<Point2<T>>,
    weights: Vec<T>,
    values: Vec<[T; 2]>,
}

fn sample<T: Real>(u: &FeFunction<T>, part: SeminormPart, t: usize, rule: &TriangleRule<T>) -> Sampled<T> {
    let space = &u.space;
    let g = space.geom(t);
    let mut out = Sampled { points: Vec::new(), weights: Vec::new(), values: Vec::new() };
    for (l, &w) in rule.points.iter().zip(&rule.weights) {
        let j = space.local_jet(&u.coeffs, t, *l);
        out.points.push(g.point(*l));
        out.weights.push(w * g.area);
        out.values.push(match part {
            SeminormPart::Whole => [j.value, T::zero()],
            SeminormPart::Gradient => [j.grad.x, j.grad.y],
        });
    }
    out
}

fn tensor_sampled<T: Real>(eng: &PairIntegrator<T>, a: &Sampled<T>, b: &Sampled<T>) -> T {
    let mut acc = T::zero();
    for q in 0..a.points.len() {
        let mut row = T::zero();
        for r in 0..b.points.len() {
            let d0 = a.values[q][0] - b.values[r][0];
            let d1 = a.values[q][1] - b.values[r][1];
            row += b.weights[r] * (d0 * d0 + d1 * d1) * eng.kernel(a.points[q], b.points[r]);
        }
        acc += a.weights[q] * row;
    }
    acc
}

/// Squared Gagliardo seminorm `∬ |u(x)-u(y)|² / |x-y|^{2+2s}` over `Ω×Ω` of a finite element function.
pub fn gagliardo_seminorm_sq<T: Real>(
    u: &FeFunction<T>,
    s: T,
    part: SeminormPart,
    opts: &GagliardoOptions,
) -> Result<T, NormError> {
    check_exponent(s)?;
    let space = &u.space;
    let nt = space.num_elements();
    if nt * (nt + 1) / 2 > opts.max_pairs {
        return Err(NormError::QuadratureBudgetExceeded(format!("{} element pairs exceed the limit {}", nt * (nt + 1) / 2, opts.max_pairs)));
    }
    let order = space.order();
    let deg = match part {
        SeminormPart::Whole => 2 * order,
        SeminormPart::Gradient => 2 * (order - 1),
    };
    let scale = u.coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()));
    let hmin = (0..nt).map(|t| space.mesh().triangle_diameter(t)).fold(T::infinity(), T::min);
    let scale = match part {
        SeminormPart::Whole => scale,
        SeminormPart::Gradient => scale / hmin,
    };
    let apex_tol = T::epsilon() * T::of(1e3) * scale * scale;
    let eng = PairIntegrator::new(s, deg.max(2), opts, apex_tol);
    let cls = PairClassifier::new(space, opts);
    let mid_rule = TriangleRule::<T>::of_degree(4);
    let far_rule = TriangleRule::<T>::of_degree(2);
    let mids: Vec<Sampled<T>> = space.map_elements(|t| sample(u, part, t, &mid_rule));
    let fars: Vec<Sampled<T>> = space.map_elements(|t| sample(u, part, t, &far_rule));
    let local = |t: usize, x: Point2<T>| -> [T; 2] {
        let g = space.geom(t);
        let (v, d) = basis(order, g, bary(g, x));
        let dofs = space.elem_dofs(t);
        let mut r = [T::zero(); 2];
        for (i, &k) in dofs.iter().enumerate() {
            match part {
                SeminormPart::Whole => r[0] += u.coeffs[k] * v[i],
                SeminormPart::Gradient => {
                    r[0] += u.coeffs[k] * d[i].x;
                    r[1] += u.coeffs[k] * d[i].y;
                }
            }
        }
        r
    };
    let rows: Vec<Result<T, NormError>> = (0..nt)
        .into_par_iter()
        .map(|k| {
            let fail = Cell::new(false);
            let sk = Simplex::triangle(space.geom(k).verts);
            let mut parts = Vec::with_capacity(nt - k);
            for l in k..nt {
                let factor = if l == k { T::one() } else { T::of(2.0) };
                let v = match cls.tier(k, l) {
                    tier @ (Tier::Touching | Tier::Near) => {
                        let sl = Simplex::triangle(space.geom(l).verts);
                        let num = |x: Point2<T>, y: Point2<T>| {
                            let (a, b) = (local(k, x), local(l, y));
                            let (d0, d1) = (a[0] - b[0], a[1] - b[1]);
                            [d0 * d0 + d1 * d1]
                        };
                        if tier == Tier::Touching {
                            eng.pair(&sk, &sl, &num, &fail)[0]
                        } else {
                            eng.leaf(&sk, &sl, &num, 0)[0]
                        }
                    }
                    Tier::Mid => tensor_sampled(&eng, &mids[k], &mids[l]),
                    Tier::Far => tensor_sampled(&eng, &fars[k], &fars[l]),
                };
                parts.push(factor * v);
            }
            if fail.get() {
                return Err(NormError::Divergent(format!(
                    "the integrand does not vanish on the diagonal near element {k} and the double integral diverges for s = {}",
                    s.as_f64()
                )));
            }
            Ok(ordered_sum(&parts))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<T>, _>>()?;
    Ok(ordered_sum(&rows))
}

/// Dense matrix `A_ij = ∬ (φ_i(x)-φ_i(y))(φ_j(x)-φ_j(y)) / |x-y|^{2+2s}` of a P1 space, over all nodes.
pub fn gagliardo_gram<T: Real>(space: &FeSpace<T>, s: T, opts: &GagliardoOptions, max_dofs: usize) -> Result<DenseMatrix<T>, NormError> {
    check_exponent(s)?;
    if space.order() != 1 {
        return Err(NormError::Unsupported("the fractional Gram matrix is built for P1 spaces".into()));
    }
    let n = space.dof_count();
    if n > max_dofs {
        return Err(NormError::GramAssemblyBudget { dofs: n, limit: max_dofs });
    }
    let nt = space.num_elements();
    let eng = PairIntegrator::new(s, 2, opts, T::epsilon());
    let cls = PairClassifier::new(space, opts);
    let mut a = DenseMatrix::zeros(n);

    // near field: unordered pairs, 21 upper-triangle products over up to 6 nodes
    let near: Vec<Vec<([usize; 6], usize, [T; 21])>> = (0..nt)
        .into_par_iter()
        .map(|k| {
            let fail = Cell::new(false);
            let gk = space.geom(k);
            let nk = space.elem_dofs(k);
            let sk = Simplex::triangle(gk.verts);
            let mut out = Vec::new();
            for l in k..nt {
                let tier = cls.tier(k, l);
                if !matches!(tier, Tier::Touching | Tier::Near) {
                    continue;
                }
                let gl = space.geom(l);
                let nl = space.elem_dofs(l);
                let mut dofs = [usize::MAX; 6];
                dofs[..3].copy_from_slice(nk);
                let mut cnt = 3;
                // position of each local node of L inside `dofs`
                let mut lpos = [0usize; 3];
                for (j, &d) in nl.iter().enumerate() {
                    lpos[j] = match dofs[..cnt].iter().position(|&e| e == d) {
                        Some(p) => p,
                        None => {
                            dofs[cnt] = d;
                            cnt += 1;
                            cnt - 1
                        }
                    };
                }
                let num = |x: Point2<T>, y: Point2<T>| {
                    let (lx, ly) = (bary(gk, x), bary(gl, y));
                    let mut d = [T::zero(); 6];
                    d[..3].copy_from_slice(&lx);
                    for j in 0..3 {
                        d[lpos[j]] -= ly[j];
                    }
                    let mut r = [T::zero(); 21];
                    let mut idx = 0;
                    for i in 0..6 {
                        for j in i..6 {
                            r[idx] = d[i] * d[j];
                            idx += 1;
                        }
                    }
                    r
                };
                let sl = Simplex::triangle(gl.verts);
                let v = if tier == Tier::Touching { eng.pair(&sk, &sl, &num, &fail) } else { eng.leaf(&sk, &sl, &num, 0) };
                out.push((dofs, cnt, if l == k { v } else { v.map(|x| x * T::of(2.0)) }));
            }
            out
        })
        .collect();
    for list in near {
        for (dofs, cnt, v) in list {
            let mut idx = 0;
            for i in 0..6 {
                for j in i..6 {
                    if i < cnt && j < cnt {
                        *a.at_mut(dofs[i], dofs[j]) += v[idx];
                        if i != j {
                            *a.at_mut(dofs[j], dofs[i]) += v[idx];
                        }
                    }
                    idx += 1;
                }
            }
        }
    }

    // separated pairs: per-element strips, added in element order
    let rules = [TriangleRule::<T>::of_degree(4), TriangleRule::<T>::of_degree(2)];
    let pts: Vec<[Vec<(Point2<T>, T, [T; 3])>; 2]> = space.map_elements(|t| {
        let g = space.geom(t);
        rules.clone().map(|r| r.points.iter().zip(&r.weights).map(|(l, &w)| (g.point(*l), w * g.area, *l)).collect())
    });
    const STRIP_CHUNK: usize = 64;
    for start in (0..nt).step_by(STRIP_CHUNK) {
        let end = (start + STRIP_CHUNK).min(nt);
        let strips: Vec<Vec<T>> = (start..end)
            .into_par_iter()
            .map(|k| {
                let mut strip = vec![T::zero(); 3 * n];
                let nk = space.elem_dofs(k);
                let mut kappa = [vec![T::zero(); pts[k][0].len()], vec![T::zero(); pts[k][1].len()]];
                for l in 0..nt {
                    let ri = match cls.tier(k.min(l), k.max(l)) {
                        Tier::Mid => 0,
                        Tier::Far => 1,
                        _ => continue,
                    };
                    let nl = space.elem_dofs(l);
                    let mut cross = [[T::zero(); 3]; 3];
                    for (q, &(x, wx, lx)) in pts[k][ri].iter().enumerate() {
                        let mut row = [T::zero(); 3];
                        let mut ksum = T::zero();
                        for &(y, wy, ly) in &pts[l][ri] {
                            let kv = wy * eng.kernel(x, y);
                            ksum += kv;
                            for b in 0..3 {
                                row[b] += kv * ly[b];
                            }
                        }
                        kappa[ri][q] += wx * ksum;
                        for a in 0..3 {
                            for b in 0..3 {
                                cross[a][b] += wx * lx[a] * row[b];
                            }
                        }
                    }
                    for a in 0..3 {
                        for b in 0..3 {
                            strip[a * n + nl[b]] -= T::of(2.0) * cross[a][b];
                        }
                    }
                }
                for ri in 0..2 {
                    for (q, &(_, _, lx)) in pts[k][ri].iter().enumerate() {
                        for a in 0..3 {
                            for b in 0..3 {
                                strip[a * n + nk[b]] += T::of(2.0) * kappa[ri][q] * lx[a] * lx[b];
                            }
                        }
                    }
                }
                strip
            })
            .collect();
        for (k, strip) in (start..end).zip(strips) {
            let nk = space.elem_dofs(k);
            for r in 0..3 {
                let row = &strip[r * n..(r + 1) * n];
                let dst = a_row(&mut a, nk[r]);
                for (x, &y) in dst.iter_mut().zip(row) {
                    *x += y;
                }
            }
        }
    }
    Ok(a)
}

/// Gagliardo Gram matrix of one P1 space, for the seminorm of many functions.
pub struct FractionalGram<T> {
    space: Arc<FeSpace<T>>,
    s: T,
    matrix: DenseMatrix<T>,
}

impl<T: Real> FractionalGram<T> {
    pub fn new(space: &Arc<FeSpace<T>>, s: T, opts: &GagliardoOptions, max_dofs: usize) -> Result<Self, NormError> {
        Ok(Self { space: space.clone(), s, matrix: gagliardo_gram(space, s, opts, max_dofs)? })
    }

    pub fn s(&self) -> T {
        self.s
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    /// `cᵀ A c`; the function must live on the space the matrix was built for.
    pub fn seminorm_sq(&self, u: &FeFunction<T>) -> Result<T, NormError> {
        if !Arc::ptr_eq(&u.space, &self.space) {
            return Err(NormError::Unsupported("function lives on a different space than the Gram matrix".into()));
        }
        Ok(dot(&u.coeffs, &self.matrix.mul_vec(&u.coeffs)).max(T::zero()))
    }
}

/// How a fractional seminorm is evaluated.
#[derive(Clone, Copy)]
pub enum Seminorm<'a, T> {
    /// Element-pair quadrature of the function itself.
    Direct(&'a GagliardoOptions),
    /// Quadratic form of a precomputed P1 Gram matrix.
    Gram(&'a FractionalGram<T>),
}

impl<'a, T> From<&'a GagliardoOptions> for Seminorm<'a, T> {
    fn from(o: &'a GagliardoOptions) -> Self {
        Seminorm::Direct(o)
    }
}

impl<'a, T> From<&'a FractionalGram<T>> for Seminorm<'a, T> {
    fn from(g: &'a FractionalGram<T>) -> Self {
        Seminorm::Gram(g)
    }
}

impl<T: Real> Seminorm<'_, T> {
    /// Squared seminorm of `u` at index `s`.
    pub fn eval(&self, u: &FeFunction<T>, s: T) -> Result<T, NormError> {
        match self {
            Seminorm::Direct(o) => gagliardo_seminorm_sq(u, s, SeminormPart::Whole, o),
            Seminorm::Gram(g) if g.s == s => g.seminorm_sq(u),
            Seminorm::Gram(g) => Err(NormError::Unsupported(format!("Gram matrix built for s = {} used at s = {}", g.s.as_f64(), s.as_f64()))),
        }
    }
}

fn a_row<T>(m: &mut DenseMatrix<T>, i: usize) -> &mut [T] {
    let n = m.n;
    &mut m.data[i * n..(i + 1) * n]
}
