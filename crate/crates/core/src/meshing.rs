//! Conforming triangulations of polygons, graded toward reentrant corners,
//! plus red refinement and a plain-text mesh format.

use std::collections::HashMap;
use std::fmt::Write as _;

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, RefinementParameters, Triangulation};
use thiserror::Error;

use crate::geometry::{point_segment_distance, Domain, Point2, SegmentDistance};
use crate::scalar::Real;

/// Smallest interior angle accepted in a generated mesh.
pub const MIN_ANGLE_DEG: f64 = 20.0;
const REFINE_ANGLE_DEG: f64 = 25.0;
const MAX_SIZE_PASSES: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("bad meshing parameter: {0}")]
    BadParam(String),
    #[error("mesh generation failed: {0}")]
    MeshFailure(String),
    #[error("no boundary edge carries tag `{0}`")]
    UnknownTag(String),
    #[error("mesh file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mesh: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    /// Node pair oriented counter-clockwise around the domain.
    pub nodes: [usize; 2],
    pub tag: String,
}

/// Boundary edge with its geometry, as returned by [`Mesh::boundary_edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGeometry<T> {
    pub nodes: [usize; 2],
    pub tag: String,
    pub start: Point2<T>,
    pub end: Point2<T>,
    pub length: T,
    pub tangent: Point2<T>,
    pub normal: Point2<T>,
    pub arc_start: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    pub nodes: Vec<Point2<T>>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Polygon vertices with their interior angles.
    pub corner_nodes: Vec<(usize, T)>,
    pub h_max: T,
}

fn sp(p: Point2<f64>) -> spade::Point2<f64> {
    spade::Point2::new(p.x, p.y)
}

fn pt(p: spade::Point2<f64>) -> Point2<f64> {
    Point2::new(p.x, p.y)
}

/// Element size field for `triangulate`: `h` away from reentrant corners,
/// `h (r/R)^(1-gamma)` close to them, never below the graded floor.
fn graded_size(d: &Domain<f64>, h: f64, gamma: f64) -> impl Fn(Point2<f64>) -> f64 {
    let corners: Vec<Point2<f64>> = d
        .corner_angles()
        .iter()
        .filter(|c| c.1 > std::f64::consts::PI + 1e-9)
        .map(|c| d.vertices()[c.0])
        .collect();
    let big_r = 0.5 * d.diameter();
    let floor = if gamma < 1.0 { (h / big_r).min(1.0).powf((1.0 - gamma) / gamma) } else { 1.0 };
    move |p: Point2<f64>| {
        let mut f = 1.0f64;
        if gamma < 1.0 {
            for c in &corners {
                let r = p.dist(*c);
                f = f.min((r / big_r).powf(1.0 - gamma).max(floor));
            }
        }
        h * f
    }
}

/// Triangulates `d` with target size `h`; `gamma < 1` grades toward reentrant corners.
pub fn triangulate<T: Real>(d: &Domain<T>, h: T, gamma: T) -> Result<Mesh<T>, MeshError> {
    let (h, gamma) = (h.as_f64(), gamma.as_f64());
    if !(h > 0.0 && h.is_finite()) {
        return Err(MeshError::BadParam(format!("mesh size h must be positive, got {h}")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(MeshError::BadParam(format!("grading must lie in (0, 1], got {gamma}")));
    }
    let d64: Domain<f64> = d.cast();
    let size = graded_size(&d64, h, gamma);
    let mut seeds = Vec::new();
    if gamma < 1.0 {
        let dist = SegmentDistance::from_domain(&d64);
        let big_r = 0.5 * d64.diameter();
        let n = d64.num_edges();
        for &(i, omega) in d64.corner_angles() {
            if omega <= std::f64::consts::PI + 1e-9 {
                continue;
            }
            let c = d64.vertices()[i];
            let e0 = d64.vertices()[(i + 1) % n] - c;
            let theta0 = e0.y.atan2(e0.x);
            let mut r = size(c);
            while r < big_r {
                let s = size(c + Point2::new(r, 0.0));
                let m = ((omega * r) / s).ceil().max(2.0) as usize;
                for j in 1..m {
                    let t = theta0 + omega * j as f64 / m as f64;
                    let q = c + Point2::new(r * t.cos(), r * t.sin());
                    if d64.contains(q) && dist.distance(q) >= 0.5 * size(q) {
                        seeds.push(q);
                    }
                }
                if s >= h {
                    break;
                }
                r += s;
            }
        }
    }
    mesh_with_size(&d64, h, &size, &seeds)
}

/// Triangulates `d` against an arbitrary element size field, bounded by `h`.
pub fn triangulate_sized<T: Real>(
    d: &Domain<T>,
    h: T,
    size: &dyn Fn(Point2<f64>) -> f64,
) -> Result<Mesh<T>, MeshError> {
    let h = h.as_f64();
    if !(h > 0.0 && h.is_finite()) {
        return Err(MeshError::BadParam(format!("mesh size h must be positive, got {h}")));
    }
    let d64: Domain<f64> = d.cast();
    let clipped = |p: Point2<f64>| size(p).min(h);
    mesh_with_size(&d64, h, &clipped, &[])
}

fn boundary_points(d: &Domain<f64>, size: &dyn Fn(Point2<f64>) -> f64) -> Vec<Vec<Point2<f64>>> {
    const SAMPLES: usize = 4000;
    (0..d.num_edges())
        .map(|e| {
            let (a, b) = d.edge(e);
            let len = a.dist(b);
            let s: Vec<f64> = (0..=SAMPLES)
                .map(|k| 0.5 * len * (1.0 - (std::f64::consts::PI * k as f64 / SAMPLES as f64).cos()))
                .collect();
            let dens: Vec<f64> = s.iter().map(|&t| 1.0 / size(a.lerp(b, t / len))).collect();
            let mut cum = vec![0.0; SAMPLES + 1];
            for k in 1..=SAMPLES {
                cum[k] = cum[k - 1] + 0.5 * (dens[k] + dens[k - 1]) * (s[k] - s[k - 1]);
            }
            let total = cum[SAMPLES];
            let count = ((total - 1e-9).ceil() as usize).max(1);
            let mut pts = Vec::with_capacity(count);
            let mut k = 0;
            for j in 1..count {
                let level = total * j as f64 / count as f64;
                while cum[k + 1] < level {
                    k += 1;
                }
                let frac = (level - cum[k]) / (cum[k + 1] - cum[k]);
                let t = s[k] + frac * (s[k + 1] - s[k]);
                pts.push(a.lerp(b, t / len));
            }
            pts
        })
        .collect()
}

fn min_angle(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    let ang = |p: Point2<f64>, q: Point2<f64>, r: Point2<f64>| {
        let (u, v) = (q - p, r - p);
        u.cross(v).abs().atan2(u.dot(v))
    };
    ang(a, b, c).min(ang(b, c, a)).min(ang(c, a, b))
}

fn mesh_with_size<T: Real>(
    d: &Domain<f64>,
    h: f64,
    size: &dyn Fn(Point2<f64>) -> f64,
    seeds: &[Point2<f64>],
) -> Result<Mesh<T>, MeshError> {
    let n = d.num_edges();
    let per_edge = boundary_points(d, size);
    let mut verts: Vec<spade::Point2<f64>> = d.vertices().iter().map(|&p| sp(p)).collect();
    let mut constraints = Vec::new();
    for (e, pts) in per_edge.iter().enumerate() {
        let mut prev = e;
        for &p in pts {
            verts.push(sp(p));
            let cur = verts.len() - 1;
            constraints.push([prev, cur]);
            prev = cur;
        }
        constraints.push([prev, (e + 1) % n]);
    }
    verts.extend(seeds.iter().map(|&p| sp(p)));
    let mut cdt = ConstrainedDelaunayTriangulation::<spade::Point2<f64>>::bulk_load_cdt(verts, constraints)
        .map_err(|e| MeshError::MeshFailure(format!("constrained triangulation: {e:?}")))?;

    let params = || {
        RefinementParameters::<f64>::new()
            .with_angle_limit(AngleLimit::from_deg(REFINE_ANGLE_DEG))
            .exclude_outer_faces(true)
            .with_max_additional_vertices(2_000_000)
    };
    let mut passes = 0;
    loop {
        let res = cdt.refine(params());
        if !res.refinement_complete {
            return Err(MeshError::MeshFailure("quality refinement did not complete".into()));
        }
        let mut todo = Vec::new();
        for f in cdt.inner_faces() {
            let [a, b, c] = f.positions().map(pt);
            let centroid = (a + b + c) * (1.0 / 3.0);
            if !d.contains(centroid) {
                continue;
            }
            let longest = a.dist(b).max(b.dist(c)).max(c.dist(a));
            if longest > size(centroid) {
                todo.push(centroid);
            }
        }
        if todo.is_empty() {
            break;
        }
        passes += 1;
        if passes > MAX_SIZE_PASSES {
            return Err(MeshError::MeshFailure("size refinement did not converge".into()));
        }
        for p in todo {
            cdt.insert(sp(p)).map_err(|e| MeshError::MeshFailure(format!("insertion: {e:?}")))?;
        }
    }

    // keep interior faces, renumber their vertices in triangulation order
    let mut tris_raw = Vec::new();
    let mut used = vec![false; cdt.num_vertices()];
    for f in cdt.inner_faces() {
        let vs = f.vertices();
        let [a, b, c] = f.positions().map(pt);
        if !d.contains((a + b + c) * (1.0 / 3.0)) {
            continue;
        }
        let ids = vs.map(|v| v.fix().index());
        for &i in &ids {
            used[i] = true;
        }
        if min_angle(a, b, c).to_degrees() < MIN_ANGLE_DEG {
            return Err(MeshError::MeshFailure(format!(
                "triangle with minimum angle {:.2} degrees",
                min_angle(a, b, c).to_degrees()
            )));
        }
        tris_raw.push(ids);
    }
    tris_raw.sort();
    let mut map = vec![usize::MAX; used.len()];
    let mut nodes = Vec::new();
    for (v, &u) in cdt.vertices().zip(&used) {
        if u {
            map[v.fix().index()] = nodes.len();
            nodes.push(pt(v.position()));
        }
    }
    for i in 0..n {
        if map[i] != i {
            return Err(MeshError::MeshFailure(format!("polygon vertex {i} is not a mesh node")));
        }
    }
    let triangles: Vec<[usize; 3]> = tris_raw
        .iter()
        .map(|t| {
            let t = t.map(|i| map[i]);
            let area2 = (nodes[t[1]] - nodes[t[0]]).cross(nodes[t[2]] - nodes[t[0]]);
            if area2 > 0.0 {
                t
            } else {
                [t[0], t[2], t[1]]
            }
        })
        .collect();

    let boundary_edges = classify_boundary(d, &nodes, &triangles)?;
    let mesh64 = Mesh {
        h_max: 0.0,
        corner_nodes: d.corner_angles().to_vec(),
        nodes,
        triangles,
        boundary_edges,
    };
    let mut mesh = mesh64.cast::<T>();
    mesh.h_max = mesh.compute_h_max();
    if mesh.h_max.as_f64() > h * (1.0 + 1e-12) {
        return Err(MeshError::MeshFailure(format!("element diameter {} exceeds h = {h}", mesh.h_max)));
    }
    Ok(mesh)
}

fn classify_boundary(
    d: &Domain<f64>,
    nodes: &[Point2<f64>],
    triangles: &[[usize; 3]],
) -> Result<Vec<BoundaryEdge>, MeshError> {
    let mut count: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (i, j) = (t[k], t[(k + 1) % 3]);
            let e = count.entry((i.min(j), i.max(j))).or_insert((0, [i, j]));
            e.0 += 1;
        }
    }
    let scale = d.diameter();
    let mut out = Vec::new();
    for (_, (c, [i, j])) in count {
        if c != 1 {
            continue;
        }
        let (p, q) = (nodes[i], nodes[j]);
        let edge = (0..d.num_edges()).find(|&e| {
            let (a, b) = d.edge(e);
            point_segment_distance(p, a, b) < 1e-10 * scale && point_segment_distance(q, a, b) < 1e-10 * scale
        });
        let Some(e) = edge else {
            return Err(MeshError::MeshFailure(format!("boundary edge ({i}, {j}) is not on the polygon")));
        };
        let (a, b) = d.edge(e);
        let pos = (p - a).dot(b - a);
        out.push((e, pos, BoundaryEdge { nodes: [i, j], tag: d.edge_tag(e).to_string() }));
    }
    out.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.partial_cmp(&y.1).unwrap()));
    Ok(out.into_iter().map(|x| x.2).collect())
}

impl<T: Real> Mesh<T> {
    pub fn cast<U: Real>(&self) -> Mesh<U> {
        Mesh {
            nodes: self.nodes.iter().map(|p| p.cast()).collect(),
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
            corner_nodes: self.corner_nodes.iter().map(|&(i, w)| (i, U::of(w.as_f64()))).collect(),
            h_max: U::of(self.h_max.as_f64()),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices_of(&self, t: usize) -> [Point2<T>; 3] {
        self.triangles[t].map(|i| self.nodes[i])
    }

    pub fn triangle_area(&self, t: usize) -> T {
        let [a, b, c] = self.vertices_of(t);
        (b - a).cross(c - a) * T::of(0.5)
    }

    pub fn triangle_diameter(&self, t: usize) -> T {
        let [a, b, c] = self.vertices_of(t);
        a.dist(b).max(b.dist(c)).max(c.dist(a))
    }

    pub fn total_area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    fn compute_h_max(&self) -> T {
        (0..self.triangles.len()).map(|t| self.triangle_diameter(t)).fold(T::zero(), T::max)
    }

    pub fn min_angle_deg(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.vertices_of(t).map(|p| p.cast::<f64>());
                min_angle(a, b, c).to_degrees()
            })
            .fold(180.0, f64::min)
    }

    /// Unique edges numbered by first encounter, and the edge ids of every
    /// triangle in local order (0,1), (1,2), (2,0).
    pub fn edges(&self) -> (Vec<[usize; 2]>, Vec<[usize; 3]>) {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut per_tri = Vec::with_capacity(self.triangles.len());
        for t in &self.triangles {
            let mut ids = [0; 3];
            for k in 0..3 {
                let (i, j) = (t[k], t[(k + 1) % 3]);
                let key = (i.min(j), i.max(j));
                ids[k] = *index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
            }
            per_tri.push(ids);
        }
        (edges, per_tri)
    }

    /// Nodes lying on the boundary, ascending.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut on = vec![false; self.nodes.len()];
        for e in &self.boundary_edges {
            on[e.nodes[0]] = true;
            on[e.nodes[1]] = true;
        }
        (0..self.nodes.len()).filter(|&i| on[i]).collect()
    }

    /// Boundary edges with geometry, optionally restricted to one tag.
    pub fn boundary_edges(&self, tag: Option<&str>) -> Result<Vec<EdgeGeometry<T>>, MeshError> {
        let mut out = Vec::new();
        let mut arc = T::zero();
        for e in &self.boundary_edges {
            if tag.is_some_and(|t| t != e.tag) {
                continue;
            }
            let (start, end) = (self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]);
            let length = start.dist(end);
            let tangent = (end - start) * (T::one() / length);
            out.push(EdgeGeometry {
                nodes: e.nodes,
                tag: e.tag.clone(),
                start,
                end,
                length,
                tangent,
                normal: Point2::new(tangent.y, -tangent.x),
                arc_start: arc,
            });
            arc += length;
        }
        match tag {
            Some(t) if out.is_empty() => Err(MeshError::UnknownTag(t.to_string())),
            _ => Ok(out),
        }
    }

    /// Distance-to-boundary evaluator built from the boundary edges.
    pub fn boundary_distance(&self) -> SegmentDistance<T> {
        SegmentDistance::new(
            self.boundary_edges.iter().map(|e| (self.nodes[e.nodes[0]], self.nodes[e.nodes[1]])).collect(),
        )
    }

    /// Structural checks: indices in range, positive areas, conformity,
    /// boundary edges used by exactly one triangle.
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.nodes.len();
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&i| i >= n) {
                return Err(MeshError::Invalid(format!("triangle {k} references a missing node")));
            }
            if self.triangle_area(k) <= T::zero() {
                return Err(MeshError::Invalid(format!("triangle {k} has non-positive area")));
            }
            for j in 0..3 {
                let (a, b) = (t[j], t[(j + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        if let Some((e, c)) = count.iter().find(|(_, &c)| c > 2) {
            return Err(MeshError::Invalid(format!("edge {e:?} shared by {c} triangles")));
        }
        let boundary_count = count.values().filter(|&&c| c == 1).count();
        if boundary_count != self.boundary_edges.len() {
            return Err(MeshError::Invalid(format!(
                "{} boundary edges listed, {} found",
                self.boundary_edges.len(),
                boundary_count
            )));
        }
        for b in &self.boundary_edges {
            let [i, j] = b.nodes;
            if count.get(&(i.min(j), i.max(j))) != Some(&1) {
                return Err(MeshError::Invalid(format!("listed boundary edge ({i}, {j}) is interior")));
            }
        }
        Ok(())
    }

    /// Text form: `nodes N`, `tris T`, then `n x y`, `t i j k`, `b i j tag`
    /// and `c i omega` lines. Floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "nodes {}", self.nodes.len()).unwrap();
        writeln!(s, "tris {}", self.triangles.len()).unwrap();
        for p in &self.nodes {
            writeln!(s, "n {} {}", p.x, p.y).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "t {} {} {}", t[0], t[1], t[2]).unwrap();
        }
        for b in &self.boundary_edges {
            writeln!(s, "b {} {} {}", b.nodes[0], b.nodes[1], b.tag).unwrap();
        }
        for (i, w) in &self.corner_nodes {
            writeln!(s, "c {i} {w}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut nodes = Vec::new();
        let mut triangles = Vec::new();
        let mut boundary_edges = Vec::new();
        let mut corner_nodes = Vec::new();
        let (mut n_decl, mut t_decl) = (None, None);
        for (k, line) in text.lines().enumerate() {
            let err = |msg: &str| MeshError::Parse { line: k + 1, msg: msg.to_string() };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.is_empty() {
                continue;
            }
            let num = |i: usize| -> Result<T, MeshError> {
                parts.get(i).and_then(|s| s.parse::<T>().ok()).ok_or_else(|| err("bad number"))
            };
            let idx = |i: usize| -> Result<usize, MeshError> {
                parts.get(i).and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| err("bad index"))
            };
            match parts[0] {
                "nodes" => n_decl = Some(idx(1)?),
                "tris" => t_decl = Some(idx(1)?),
                "n" => nodes.push(Point2::new(num(1)?, num(2)?)),
                "t" => triangles.push([idx(1)?, idx(2)?, idx(3)?]),
                "b" => {
                    let tag = parts.get(3).ok_or_else(|| err("missing tag"))?;
                    boundary_edges.push(BoundaryEdge { nodes: [idx(1)?, idx(2)?], tag: tag.to_string() });
                }
                "c" => corner_nodes.push((idx(1)?, num(2)?)),
                _ => return Err(err("unknown record")),
            }
        }
        if n_decl != Some(nodes.len()) || t_decl != Some(triangles.len()) {
            return Err(MeshError::Parse { line: 0, msg: "header counts do not match records".into() });
        }
        let mut m = Mesh { nodes, triangles, boundary_edges, corner_nodes, h_max: T::zero() };
        m.validate()?;
        m.h_max = m.compute_h_max();
        Ok(m)
    }
}

/// Uniform red refinement: every triangle splits into four, boundary tags carry over.
///
/// New nodes are the edge midpoints, appended in first-encounter edge order,
/// so the coarse nodes keep their indices and the spaces are nested.
pub fn refine<T: Real>(m: &Mesh<T>) -> Mesh<T> {
    let (edges, per_tri) = m.edges();
    let n0 = m.nodes.len();
    let mut nodes = m.nodes.clone();
    nodes.extend(edges.iter().map(|e| (m.nodes[e[0]] + m.nodes[e[1]]) * T::of(0.5)));
    let mut triangles = Vec::with_capacity(4 * m.triangles.len());
    for (t, ids) in m.triangles.iter().zip(&per_tri) {
        let [a, b, c] = *t;
        let [mab, mbc, mca] = ids.map(|e| n0 + e);
        triangles.push([a, mab, mca]);
        triangles.push([mab, b, mbc]);
        triangles.push([mca, mbc, c]);
        triangles.push([mab, mbc, mca]);
    }
    let index: HashMap<(usize, usize), usize> =
        edges.iter().enumerate().map(|(k, e)| ((e[0], e[1]), k)).collect();
    let mut boundary_edges = Vec::with_capacity(2 * m.boundary_edges.len());
    for b in &m.boundary_edges {
        let [i, j] = b.nodes;
        let mid = n0 + index[&(i.min(j), i.max(j))];
        boundary_edges.push(BoundaryEdge { nodes: [i, mid], tag: b.tag.clone() });
        boundary_edges.push(BoundaryEdge { nodes: [mid, j], tag: b.tag.clone() });
    }
    let mut out = Mesh { nodes, triangles, boundary_edges, corner_nodes: m.corner_nodes.clone(), h_max: T::zero() };
    out.h_max = out.compute_h_max();
    out
}

/// Locates the triangle containing a point using a bucket grid.
#[derive(Debug, Clone)]
pub struct Locator<T> {
    origin: Point2<T>,
    cell: T,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl<T: Real> Locator<T> {
    pub fn new(m: &Mesh<T>) -> Self {
        let (mut lo, mut hi) = (m.nodes[0], m.nodes[0]);
        for p in &m.nodes {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let area = ((hi.x - lo.x) * (hi.y - lo.y)).max(T::of(1e-30));
        let cell = (area / T::of_usize(m.triangles.len().max(1))).sqrt().max(T::of(1e-12));
        let nx = ((hi.x - lo.x) / cell).floor().to_usize().unwrap_or(0) + 1;
        let ny = ((hi.y - lo.y) / cell).floor().to_usize().unwrap_or(0) + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for (k, t) in m.triangles.iter().enumerate() {
            let ps = t.map(|i| m.nodes[i]);
            let bx0 = ps.iter().map(|p| p.x).fold(T::infinity(), T::min);
            let bx1 = ps.iter().map(|p| p.x).fold(T::neg_infinity(), T::max);
            let by0 = ps.iter().map(|p| p.y).fold(T::infinity(), T::min);
            let by1 = ps.iter().map(|p| p.y).fold(T::neg_infinity(), T::max);
            let c = |v: T, o: T, n: usize| ((v - o) / cell).floor().to_usize().unwrap_or(0).min(n - 1);
            for cy in c(by0, lo.y, ny)..=c(by1, lo.y, ny) {
                for cx in c(bx0, lo.x, nx)..=c(bx1, lo.x, nx) {
                    cells[cy * nx + cx].push(k as u32);
                }
            }
        }
        Self { origin: lo, cell, nx, ny, cells }
    }

    /// Containing triangle and barycentric coordinates, with a small tolerance
    /// so that points on element edges are found.
    pub fn locate(&self, m: &Mesh<T>, p: Point2<T>) -> Option<(usize, [T; 3])> {
        let fx = (p.x - self.origin.x) / self.cell;
        let fy = (p.y - self.origin.y) / self.cell;
        if fx < -T::of(1e-9) || fy < -T::of(1e-9) {
            return None;
        }
        let cx = fx.max(T::zero()).to_usize()?;
        let cy = fy.max(T::zero()).to_usize()?;
        if cx >= self.nx || cy >= self.ny {
            return None;
        }
        let tol = -T::of(1e-10);
        let mut best: Option<(usize, [T; 3])> = None;
        for &k in &self.cells[cy * self.nx + cx] {
            let bary = barycentric(m, k as usize, p);
            let worst = bary[0].min(bary[1]).min(bary[2]);
            if worst >= tol && best.is_none_or(|b| worst > b.1[0].min(b.1[1]).min(b.1[2])) {
                best = Some((k as usize, bary));
            }
        }
        best
    }
}

pub fn barycentric<T: Real>(m: &Mesh<T>, t: usize, p: Point2<T>) -> [T; 3] {
    let [a, b, c] = m.vertices_of(t);
    let det = (b - a).cross(c - a);
    let l1 = (p - a).cross(c - a) / det;
    let l2 = (b - a).cross(p - a) / det;
    [T::one() - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{l_shape, make_sawtooth, unit_square, SawtoothParams, GAMMA_EPS_TAG};

    pub(crate) fn two_triangle_square() -> Mesh<f64> {
        let p = |x: f64, y: f64| Point2::new(x, y);
        let tag = |i, j| BoundaryEdge { nodes: [i, j], tag: "boundary".into() };
        let half = std::f64::consts::FRAC_PI_2;
        Mesh {
            nodes: vec![p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            boundary_edges: vec![tag(0, 1), tag(1, 2), tag(2, 3), tag(3, 0)],
            corner_nodes: vec![(0, half), (1, half), (2, half), (3, half)],
            h_max: 2f64.sqrt(),
        }
    }

    #[test]
    fn coarse_square() {
        let m = triangulate(&unit_square::<f64>(), 0.5, 1.0).unwrap();
        assert!(m.num_triangles() >= 4);
        m.validate().unwrap();
        for p in &m.nodes {
            assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
        }
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        let len: f64 = m.boundary_edges(None).unwrap().iter().map(|e| e.length).sum();
        assert!((len - 4.0).abs() < 1e-12);
        assert!(m.h_max <= 0.5);
        assert!(m.min_angle_deg() >= MIN_ANGLE_DEG);
        assert_eq!(&m.nodes[..4], unit_square::<f64>().vertices());
    }

    #[test]
    fn bad_params() {
        let sq = unit_square::<f64>();
        assert!(matches!(triangulate(&sq, 0.0, 1.0), Err(MeshError::BadParam(_))));
        assert!(matches!(triangulate(&sq, 0.1, 0.0), Err(MeshError::BadParam(_))));
        assert!(matches!(triangulate(&sq, 0.1, 1.5), Err(MeshError::BadParam(_))));
    }

    #[test]
    fn graded_l_shape_element_sizes() {
        let l = l_shape::<f64>();
        let h = 0.1;
        let m = triangulate(&l, h, 0.5).unwrap();
        m.validate().unwrap();
        assert!((m.total_area() - 3.0).abs() < 1e-12);
        let big_r = 0.5 * l.diameter();
        // sweep: every element diameter against h * (r/R)^(1-gamma) at its farthest vertex
        let mut near = 0;
        for t in 0..m.num_triangles() {
            let r = m.vertices_of(t).iter().map(|p| p.norm()).fold(0.0, f64::max);
            let bound = 1.0 * h * (r / big_r).powf(0.5).max((h / big_r).powf(1.0));
            assert!(m.triangle_diameter(t) <= 1.5 * bound + 1e-12, "element {t} at r={r}");
            if r < 0.1 {
                near += 1;
            }
        }
        assert!(near > 10);
    }

    #[test]
    fn graded_slope_matches_exponent() {
        let l = l_shape::<f64>();
        let m = triangulate(&l, 0.05, 0.5).unwrap();
        // least squares of log(size) against log(distance of centroid) for 0.02 < r < 0.5
        let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for t in 0..m.num_triangles() {
            let [a, b, c] = m.vertices_of(t);
            let r = ((a + b + c) * (1.0 / 3.0)).norm();
            if !(0.02..0.5).contains(&r) {
                continue;
            }
            let (x, y) = (r.ln(), m.triangle_diameter(t).ln());
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            n += 1.0;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope - 0.5).abs() <= 0.15 * 0.5 + 1e-12, "slope {slope}");
    }

    #[test]
    fn sawtooth_mesh_boundary_length() {
        let d = make_sawtooth::<f64>(SawtoothParams::new(4).unwrap()).unwrap();
        let m = triangulate(&d, 0.05, 1.0).unwrap();
        let g: f64 = m.boundary_edges(Some(GAMMA_EPS_TAG)).unwrap().iter().map(|e| e.length).sum();
        assert!((g - 0.5 * 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(m.boundary_edges(Some("bogus")), Err(MeshError::UnknownTag(_))));
        assert!((m.total_area() - d.area()).abs() < 1e-12 * d.area());
    }

    #[test]
    fn red_refinement() {
        let m = two_triangle_square();
        m.validate().unwrap();
        let r = refine(&m);
        assert_eq!(r.num_triangles(), 8);
        r.validate().unwrap();
        let rr = refine(&r);
        assert!((rr.h_max / m.h_max - 0.25).abs() < 0.05 * 0.25);
        let tags = |m: &Mesh<f64>| {
            let mut t: Vec<_> = m.boundary_edges.iter().map(|e| e.tag.clone()).collect();
            t.sort();
            t.dedup();
            t
        };
        assert_eq!(tags(&rr), tags(&m));
        assert_eq!(rr.boundary_edges.len(), 4 * m.boundary_edges.len());
        assert!((rr.total_area() - 1.0).abs() < 1e-14);
        let d = make_sawtooth::<f64>(SawtoothParams::new(2).unwrap()).unwrap();
        let m = triangulate(&d, 0.1, 1.0).unwrap();
        let r = refine(&m);
        let count = |m: &Mesh<f64>| m.boundary_edges.iter().filter(|e| e.tag == GAMMA_EPS_TAG).count();
        assert_eq!(count(&r), 2 * count(&m));
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let m = triangulate(&l_shape::<f64>(), 0.2, 0.5).unwrap();
        let text = m.to_text();
        let back = Mesh::<f64>::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
        assert!(Mesh::<f64>::from_text("nodes 1\ntris 0\nn 0 0\nq\n").is_err());
    }

    #[test]
    fn locator_finds_points() {
        let m = triangulate(&l_shape::<f64>(), 0.2, 1.0).unwrap();
        let loc = Locator::new(&m);
        for &(x, y) in &[(0.5, 0.5), (-0.9, -0.9), (0.0, 0.5), (-0.3, 0.99)] {
            let (t, b) = loc.locate(&m, Point2::new(x, y)).unwrap();
            let [a, bb, c] = m.vertices_of(t);
            let q = a * b[0] + bb * b[1] + c * b[2];
            assert!((q.x - x).abs() < 1e-12 && (q.y - y).abs() < 1e-12);
        }
        assert!(loc.locate(&m, Point2::new(0.5, -0.5)).is_none());
    }

    #[test]
    fn f32_mesh() {
        let m = triangulate(&unit_square::<f32>(), 0.25, 1.0).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-5);
        m.validate().unwrap();
    }
}
