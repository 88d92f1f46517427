//! Planar polygonal domains, the sawtooth family, and distance-to-boundary functions.

use std::fmt::Write as _;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

use crate::scalar::Real;

/// Tag carried by polygon edges that were not given an explicit name.
pub const DEFAULT_TAG: &str = "boundary";
/// Tag of the oscillating bottom boundary of a sawtooth domain.
pub const GAMMA_EPS_TAG: &str = "gamma_eps";

/// Collinear vertices closer than this to a straight angle are merged.
const ANGLE_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("a polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("edge {0} has zero length")]
    DegenerateEdge(usize),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("sawtooth amplitude {0} is not of the form 1/(4k)")]
    InvalidEps(f64),
    #[error("no boundary edge carries tag `{0}`")]
    UnknownTag(String),
    #[error("polygon file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn lerp(self, o: Self, t: T) -> Self {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Real>(self) -> Point2<U> {
        Point2::new(U::of(self.x.as_f64()), U::of(self.y.as_f64()))
    }
}

impl<T: Real> Add for Point2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> Sub for Point2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Mul<T> for Point2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Real> Neg for Point2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Euclidean distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance<T: Real>(p: Point2<T>, a: Point2<T>, b: Point2<T>) -> T {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == T::zero() {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one());
    p.dist(a + ab * t)
}

fn orient<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> T {
    (b - a).cross(c - a)
}

fn on_segment<T: Real>(a: Point2<T>, b: Point2<T>, p: Point2<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_intersect<T: Real>(a: Point2<T>, b: Point2<T>, c: Point2<T>, d: Point2<T>) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    let z = T::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    (d1 == z && on_segment(c, d, a))
        || (d2 == z && on_segment(c, d, b))
        || (d3 == z && on_segment(a, b, c))
        || (d4 == z && on_segment(a, b, d))
}

/// Simple counter-clockwise polygon with per-edge tags and corner data.
///
/// Edge `i` runs from `vertices[i]` to `vertices[(i + 1) % n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T> {
    vertices: Vec<Point2<T>>,
    edge_tags: Vec<String>,
    corner_angles: Vec<(usize, T)>,
    diameter: T,
    boundary_length: T,
    area: T,
}

/// One straight piece of the boundary in arc-length parametrization.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySegment<T> {
    pub edge: usize,
    pub start: Point2<T>,
    pub end: Point2<T>,
    pub length: T,
    pub tangent: Point2<T>,
    /// Unit outward normal.
    pub normal: Point2<T>,
    /// Cumulative arc length at `start`, counted over the selected segments only.
    pub arc_start: T,
    pub tag: String,
}

/// Parameters of the sawtooth domain; the amplitude is always `1/(4k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SawtoothParams {
    k: u32,
}

impl SawtoothParams {
    pub fn new(k: u32) -> Result<Self, GeometryError> {
        if k == 0 {
            return Err(GeometryError::InvalidEps(f64::INFINITY));
        }
        Ok(Self { k })
    }

    /// Accepts only amplitudes that are exactly `1/(4k)` up to rounding.
    pub fn from_eps(eps: f64) -> Result<Self, GeometryError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(GeometryError::InvalidEps(eps));
        }
        let k = (0.25 / eps).round();
        if k < 1.0 || k > u32::MAX as f64 || ((0.25 / k) - eps).abs() > 1e-12 * eps {
            return Err(GeometryError::InvalidEps(eps));
        }
        Ok(Self { k: k as u32 })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn eps<T: Real>(&self) -> T {
        T::one() / T::of(4.0 * self.k as f64)
    }
}

fn interior_angle<T: Real>(prev: Point2<T>, v: Point2<T>, next: Point2<T>) -> T {
    let e_out = next - v;
    let e_in = prev - v;
    let mut a = e_out.cross(e_in).atan2(e_out.dot(e_in));
    if a <= T::zero() {
        a += T::TAU();
    }
    a
}

fn signed_area<T: Real>(v: &[Point2<T>]) -> T {
    let n = v.len();
    let mut s = T::zero();
    for i in 0..n {
        s += v[i].cross(v[(i + 1) % n]);
    }
    s * T::of(0.5)
}

/// Builds a polygon with every edge tagged [`DEFAULT_TAG`].
pub fn make_polygon<T: Real>(vertices: &[Point2<T>]) -> Result<Domain<T>, GeometryError> {
    make_polygon_tagged(vertices, None)
}

/// Builds a polygon; `tags[i]` names edge `i` (from vertex `i` to `i+1`).
///
/// Clockwise input is reoriented, and interior vertices of straight runs
/// with equal tags on both sides are removed.
pub fn make_polygon_tagged<T: Real>(
    vertices: &[Point2<T>],
    tags: Option<&[String]>,
) -> Result<Domain<T>, GeometryError> {
    let n = vertices.len();
    if n < 3 {
        return Err(GeometryError::TooFewVertices(n));
    }
    let mut verts = vertices.to_vec();
    let mut edge_tags: Vec<String> = match tags {
        Some(t) => {
            assert_eq!(t.len(), n, "one tag per edge");
            t.to_vec()
        }
        None => vec![DEFAULT_TAG.to_string(); n],
    };
    let scale = verts
        .iter()
        .fold(T::zero(), |m, p| m.max(p.x.abs()).max(p.y.abs()))
        .max(T::one());
    for i in 0..n {
        if !verts[i].is_finite() {
            return Err(GeometryError::DegenerateEdge(i));
        }
        if verts[i].dist(verts[(i + 1) % n]) <= T::of(1e-14) * scale {
            return Err(GeometryError::DegenerateEdge(i));
        }
    }
    let area = signed_area(&verts);
    if area == T::zero() {
        return Err(GeometryError::SelfIntersecting(0, 1));
    }
    if area < T::zero() {
        verts.reverse();
        let old = edge_tags.clone();
        for (j, tag) in edge_tags.iter_mut().enumerate() {
            *tag = old[(2 * n - 2 - j) % n].clone();
        }
    }

    loop {
        let m = verts.len();
        if m < 3 {
            return Err(GeometryError::TooFewVertices(m));
        }
        let straight = (0..m).find(|&i| {
            let a = interior_angle(verts[(i + m - 1) % m], verts[i], verts[(i + 1) % m]);
            (a - T::PI()).abs() < T::of(ANGLE_MERGE_TOL) && edge_tags[(i + m - 1) % m] == edge_tags[i]
        });
        match straight {
            Some(i) => {
                verts.remove(i);
                edge_tags.remove(i);
            }
            None => break,
        }
    }

    let m = verts.len();
    for i in 0..m {
        for j in (i + 1)..m {
            let adjacent = j == i + 1 || (i == 0 && j == m - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(verts[i], verts[(i + 1) % m], verts[j], verts[(j + 1) % m]) {
                return Err(GeometryError::SelfIntersecting(i, j));
            }
        }
    }

    let corner_angles = (0..m)
        .map(|i| (i, interior_angle(verts[(i + m - 1) % m], verts[i], verts[(i + 1) % m])))
        .collect();
    let mut diameter = T::zero();
    for i in 0..m {
        for j in (i + 1)..m {
            diameter = diameter.max(verts[i].dist(verts[j]));
        }
    }
    let boundary_length = (0..m).map(|i| verts[i].dist(verts[(i + 1) % m])).sum();
    let area = signed_area(&verts);
    Ok(Domain { vertices: verts, edge_tags, corner_angles, diameter, boundary_length, area })
}

/// Sawtooth domain `{0 < x < 1/2, eps*lambda(x/eps) < y < 1/2}` with the
/// zigzag bottom edges tagged [`GAMMA_EPS_TAG`].
pub fn make_sawtooth<T: Real>(params: SawtoothParams) -> Result<Domain<T>, GeometryError> {
    let eps: T = params.eps();
    let segments = 2 * params.k as usize;
    let mut verts = Vec::with_capacity(segments + 3);
    let mut tags = Vec::with_capacity(segments + 3);
    for j in 0..=segments {
        let x = eps * T::of_usize(j);
        let y = if j % 2 == 1 { eps } else { T::zero() };
        verts.push(Point2::new(x, y));
        tags.push(if j < segments { GAMMA_EPS_TAG } else { DEFAULT_TAG }.to_string());
    }
    let half = T::of(0.5);
    verts.push(Point2::new(half, half));
    tags.push(DEFAULT_TAG.to_string());
    verts.push(Point2::new(T::zero(), half));
    tags.push(DEFAULT_TAG.to_string());
    make_polygon_tagged(&verts, Some(&tags))
}

pub fn unit_square<T: Real>() -> Domain<T> {
    let (o, l) = (T::zero(), T::one());
    make_polygon(&[Point2::new(o, o), Point2::new(l, o), Point2::new(l, l), Point2::new(o, l)])
        .expect("unit square is a valid polygon")
}

/// The L-shaped domain `(-1,1)^2 \ [0,1]x[-1,0]` with its reentrant corner at the origin.
pub fn l_shape<T: Real>() -> Domain<T> {
    let p = |x: f64, y: f64| Point2::new(T::of(x), T::of(y));
    make_polygon(&[p(0., 0.), p(1., 0.), p(1., 1.), p(-1., 1.), p(-1., -1.), p(0., -1.)])
        .expect("L-shape is a valid polygon")
}

impl<T: Real> Domain<T> {
    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    pub fn num_edges(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge(&self, i: usize) -> (Point2<T>, Point2<T>) {
        let n = self.vertices.len();
        (self.vertices[i], self.vertices[(i + 1) % n])
    }

    pub fn edge_tag(&self, i: usize) -> &str {
        &self.edge_tags[i]
    }

    pub fn edge_tags(&self) -> &[String] {
        &self.edge_tags
    }

    /// Interior angle at every vertex, in vertex order.
    pub fn corner_angles(&self) -> &[(usize, T)] {
        &self.corner_angles
    }

    pub fn diameter(&self) -> T {
        self.diameter
    }

    pub fn boundary_length(&self) -> T {
        self.boundary_length
    }

    pub fn area(&self) -> T {
        self.area
    }

    pub fn centroid(&self) -> Point2<T> {
        let n = self.vertices.len();
        let mut c = Point2::origin();
        for i in 0..n {
            let (a, b) = self.edge(i);
            c = c + (a + b) * a.cross(b);
        }
        c * (T::one() / (T::of(6.0) * self.area))
    }

    /// Even-odd point-in-polygon test; boundary points may land on either side.
    pub fn contains(&self, p: Point2<T>) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let (a, b) = self.edge(i);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn edge_distances(&self, p: Point2<T>) -> impl Iterator<Item = T> + '_ {
        (0..self.vertices.len()).map(move |i| {
            let (a, b) = self.edge(i);
            point_segment_distance(p, a, b)
        })
    }

    /// Exact Euclidean distance to the boundary; 0 for points outside.
    pub fn distance_to_boundary(&self, p: Point2<T>) -> T {
        let d = self.edge_distances(p).fold(T::infinity(), T::min);
        if d <= T::of(1e-12) || !self.contains(p) {
            T::zero()
        } else {
            d
        }
    }

    /// Smooth 1-Lipschitz surrogate of the distance function.
    ///
    /// Power-mean soft minimum `(sum_i d_i^-m)^(-1/m)` of the edge distances.
    /// It never exceeds the true distance and stays above `n^(-1/m)` times it;
    /// the exponent is chosen so that this factor is at least `1/sqrt(2)`.
    pub fn regularized_distance(&self, p: Point2<T>) -> T {
        let rho = self.distance_to_boundary(p);
        if rho == T::zero() {
            return rho;
        }
        let m = self.soft_min_exponent();
        let sum: T = self.edge_distances(p).map(|d| (rho / d).powf(m)).sum();
        rho * sum.powf(-T::one() / m)
    }

    pub(crate) fn soft_min_exponent(&self) -> T {
        let n = self.vertices.len() as f64;
        T::of((2.0 * n.log2()).ceil().max(8.0))
    }

    /// Corner angles sorted ascending; ties keep vertex order.
    /// Same polygon in another scalar type.
    pub fn cast<U: Real>(&self) -> Domain<U> {
        let v: Vec<Point2<U>> = self.vertices.iter().map(|p| p.cast()).collect();
        make_polygon_tagged(&v, Some(&self.edge_tags)).expect("cast of a valid polygon")
    }

    pub fn interior_angles(&self) -> Vec<(usize, T)> {
        let mut a = self.corner_angles.clone();
        a.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap().then(x.0.cmp(&y.0)));
        a
    }

    /// Boundary segments in counter-clockwise order, optionally restricted to one tag.
    pub fn boundary_parametrization(
        &self,
        tag: Option<&str>,
    ) -> Result<Vec<BoundarySegment<T>>, GeometryError> {
        let mut out = Vec::new();
        let mut arc = T::zero();
        for i in 0..self.vertices.len() {
            if let Some(t) = tag {
                if self.edge_tags[i] != t {
                    continue;
                }
            }
            let (a, b) = self.edge(i);
            let length = a.dist(b);
            let tangent = (b - a) * (T::one() / length);
            out.push(BoundarySegment {
                edge: i,
                start: a,
                end: b,
                length,
                tangent,
                normal: Point2::new(tangent.y, -tangent.x),
                arc_start: arc,
                tag: self.edge_tags[i].clone(),
            });
            arc += length;
        }
        match (tag, out.is_empty()) {
            (Some(t), true) => Err(GeometryError::UnknownTag(t.to_string())),
            _ => Ok(out),
        }
    }

    /// Plain-text polygon file: `v x y` per vertex and `tag i name` per
    /// non-default edge tag.
    pub fn to_polygon_file(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            writeln!(s, "v {} {}", v.x, v.y).unwrap();
        }
        for (i, t) in self.edge_tags.iter().enumerate() {
            if t != DEFAULT_TAG {
                writeln!(s, "tag {i} {t}").unwrap();
            }
        }
        s
    }

    pub fn from_polygon_file(text: &str) -> Result<Self, GeometryError> {
        let mut verts = Vec::new();
        let mut tags: Vec<(usize, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| GeometryError::Parse { line: lineno + 1, msg: msg.to_string() };
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts[0] {
                "v" if parts.len() == 3 => {
                    let x: f64 = parts[1].parse().map_err(|_| err("bad x coordinate"))?;
                    let y: f64 = parts[2].parse().map_err(|_| err("bad y coordinate"))?;
                    verts.push(Point2::new(T::of(x), T::of(y)));
                }
                "tag" if parts.len() == 3 => {
                    let i: usize = parts[1].parse().map_err(|_| err("bad edge index"))?;
                    tags.push((i, parts[2].to_string()));
                }
                _ => return Err(err("expected `v x y` or `tag i name`")),
            }
        }
        let mut edge_tags = vec![DEFAULT_TAG.to_string(); verts.len()];
        for (i, t) in tags {
            if i >= verts.len() {
                return Err(GeometryError::Parse { line: 0, msg: format!("tag for missing edge {i}") });
            }
            edge_tags[i] = t;
        }
        make_polygon_tagged(&verts, Some(&edge_tags))
    }
}

/// Bucket grid over a set of segments for fast nearest-segment distance queries.
#[derive(Debug, Clone)]
pub struct SegmentDistance<T> {
    segments: Vec<(Point2<T>, Point2<T>)>,
    origin: Point2<T>,
    cell: T,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl<T: Real> SegmentDistance<T> {
    pub fn new(segments: Vec<(Point2<T>, Point2<T>)>) -> Self {
        assert!(!segments.is_empty(), "distance index needs at least one segment");
        let (mut lo, mut hi) = (segments[0].0, segments[0].0);
        let mut total = T::zero();
        for &(a, b) in &segments {
            for p in [a, b] {
                lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
            }
            total += a.dist(b);
        }
        let avg = total / T::of_usize(segments.len());
        let extent = (hi.x - lo.x).max(hi.y - lo.y).max(T::of(1e-12));
        let cell = avg.max(extent / T::of(256.0)).max(T::of(1e-12));
        let nx = ((hi.x - lo.x) / cell).floor().to_usize().unwrap_or(0) + 1;
        let ny = ((hi.y - lo.y) / cell).floor().to_usize().unwrap_or(0) + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for (k, &(a, b)) in segments.iter().enumerate() {
            let cx0 = ((a.x.min(b.x) - lo.x) / cell).floor().to_usize().unwrap_or(0).min(nx - 1);
            let cx1 = ((a.x.max(b.x) - lo.x) / cell).floor().to_usize().unwrap_or(0).min(nx - 1);
            let cy0 = ((a.y.min(b.y) - lo.y) / cell).floor().to_usize().unwrap_or(0).min(ny - 1);
            let cy1 = ((a.y.max(b.y) - lo.y) / cell).floor().to_usize().unwrap_or(0).min(ny - 1);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    cells[cy * nx + cx].push(k as u32);
                }
            }
        }
        Self { segments, origin: lo, cell, nx, ny, cells }
    }

    pub fn from_domain(d: &Domain<T>) -> Self {
        Self::new((0..d.num_edges()).map(|i| d.edge(i)).collect())
    }

    pub fn distance(&self, p: Point2<T>) -> T {
        let fx = (p.x - self.origin.x) / self.cell;
        let fy = (p.y - self.origin.y) / self.cell;
        let inside = fx >= T::zero() && fy >= T::zero() && fx < T::of_usize(self.nx) && fy < T::of_usize(self.ny);
        if !inside {
            return self.segments.iter().fold(T::infinity(), |m, &(a, b)| m.min(point_segment_distance(p, a, b)));
        }
        let cx = fx.to_usize().unwrap().min(self.nx - 1) as isize;
        let cy = fy.to_usize().unwrap().min(self.ny - 1) as isize;
        let mut best = T::infinity();
        let max_ring = self.nx.max(self.ny) as isize;
        for r in 0..=max_ring {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    let (x, y) = (cx + dx, cy + dy);
                    if x < 0 || y < 0 || x >= self.nx as isize || y >= self.ny as isize {
                        continue;
                    }
                    for &k in &self.cells[y as usize * self.nx + x as usize] {
                        let (a, b) = self.segments[k as usize];
                        best = best.min(point_segment_distance(p, a, b));
                    }
                }
            }
            if best <= T::of_usize(r as usize) * self.cell {
                break;
            }
        }
        best
    }
}
