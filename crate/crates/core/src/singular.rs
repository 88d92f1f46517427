//! Corner singular functions, kernel dimensions and critical exponents.

use num_rational::Ratio;
use thiserror::Error;

use crate::fem::Jet;
use crate::geometry::{point_segment_distance, Domain, Point2};
use crate::quadrature::integrate_adaptive;
use crate::scalar::Real;

/// Guard used when a floating point ratio lands on an integer.
const INTEGER_GUARD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SingularError {
    #[error("angle {0} is outside (0, 2π)")]
    BadAngle(f64),
    #[error("cutoff radius {radius} exceeds the clearance {clearance} of the corner")]
    CutoffTooLarge { radius: f64, clearance: f64 },
    #[error("vertex index {0} out of range")]
    BadVertex(usize),
}

/// Corner angle and its exponent `alpha = pi / omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularExponent<T> {
    pub omega: T,
    pub alpha: T,
}

impl<T: Real> SingularExponent<T> {
    pub fn new(omega: T) -> Result<Self, SingularError> {
        if !(omega > T::zero() && omega < T::TAU()) {
            return Err(SingularError::BadAngle(omega.as_f64()));
        }
        Ok(Self { omega, alpha: T::PI() / omega })
    }
}

/// Polar frame at a polygon vertex: `theta = 0` along the outgoing edge,
/// `theta = omega` along the incoming edge, angles increasing through the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerFrame<T> {
    pub vertex: Point2<T>,
    /// Direction angle of the `theta = 0` edge.
    pub theta0: T,
    pub omega: T,
    /// Distance from the vertex to the nearest non-incident boundary edge.
    pub clearance: T,
}

impl<T: Real> CornerFrame<T> {
    pub fn new(vertex: Point2<T>, theta0: T, omega: T) -> Result<Self, SingularError> {
        SingularExponent::new(omega)?;
        Ok(Self { vertex, theta0, omega, clearance: T::infinity() })
    }

    pub fn at_vertex(d: &Domain<T>, i: usize) -> Result<Self, SingularError> {
        let n = d.num_edges();
        if i >= n {
            return Err(SingularError::BadVertex(i));
        }
        let v = d.vertices()[i];
        let e = d.vertices()[(i + 1) % n] - v;
        let omega = d.corner_angles()[i].1;
        let clearance = (0..n)
            .filter(|&k| k != i && k != (i + n - 1) % n)
            .map(|k| {
                let (a, b) = d.edge(k);
                point_segment_distance(v, a, b)
            })
            .fold(T::infinity(), T::min);
        Ok(Self { vertex: v, theta0: e.y.atan2(e.x), omega, clearance })
    }

    /// Local Cartesian coordinates (rotated so the `theta = 0` edge is the x axis).
    pub fn local(&self, p: Point2<T>) -> Point2<T> {
        let d = p - self.vertex;
        let (s, c) = self.theta0.sin_cos();
        Point2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    /// `(r, theta)` with `theta` on the branch `(omega - 2pi, 2pi)` cut opposite the sector.
    pub fn polar(&self, p: Point2<T>) -> (T, T) {
        let q = self.local(p);
        let mut theta = q.y.atan2(q.x);
        let cut = self.omega * T::of(0.5) + T::PI();
        if theta < T::zero() {
            theta += T::TAU();
        }
        if theta > cut {
            theta -= T::TAU();
        }
        (q.norm(), theta)
    }

    fn to_global(&self, g: Point2<T>, h: [[T; 2]; 2]) -> (Point2<T>, [[T; 2]; 2]) {
        let (s, c) = self.theta0.sin_cos();
        let rot = [[c, -s], [s, c]];
        let grad = Point2::new(c * g.x - s * g.y, s * g.x + c * g.y);
        let mut out = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut v = T::zero();
                for k in 0..2 {
                    for l in 0..2 {
                        v += rot[i][k] * h[k][l] * rot[j][l];
                    }
                }
                out[i][j] = v;
            }
        }
        (grad, out)
    }
}

/// Jet of `Im(zeta^beta) = r^beta sin(beta theta)` in local coordinates.
fn imag_power_jet<T: Real>(r: T, theta: T, beta: T) -> Jet<T> {
    if r == T::zero() {
        return Jet::zero();
    }
    // f = zeta^beta, f' = beta zeta^(beta-1), f'' = beta (beta-1) zeta^(beta-2)
    let value = r.powf(beta) * (beta * theta).sin();
    let m1 = beta * r.powf(beta - T::one());
    let a1 = (beta - T::one()) * theta;
    let (re1, im1) = (m1 * a1.cos(), m1 * a1.sin());
    let m2 = beta * (beta - T::one()) * r.powf(beta - T::of(2.0));
    let a2 = (beta - T::of(2.0)) * theta;
    let (re2, im2) = (m2 * a2.cos(), m2 * a2.sin());
    // for v = Im f: v_x = Im f', v_y = Re f', v_xx = Im f'', v_xy = Re f'', v_yy = -Im f''
    Jet { value, grad: Point2::new(im1, re1), hess: [[im2, re2], [re2, -im2]] }
}

/// Quintic smoothstep cutoff: 1 on `[0, a/2]`, 0 on `[a, inf)`, C2 in between.
fn cutoff<T: Real>(r: T, a: T) -> (T, T, T) {
    let half = a * T::of(0.5);
    if r <= half {
        return (T::one(), T::zero(), T::zero());
    }
    if r >= a {
        return (T::zero(), T::zero(), T::zero());
    }
    let t = (r - half) / half;
    let t2 = t * t;
    let s = t2 * t * (T::of(10.0) - T::of(15.0) * t + T::of(6.0) * t2);
    let ds = T::of(30.0) * t2 * (T::one() - t) * (T::one() - t) / half;
    let dds = T::of(60.0) * t * (T::one() - t) * (T::one() - T::of(2.0) * t) / (half * half);
    (T::one() - s, -ds, -dds)
}

/// Linear combination of `r^beta sin(beta theta)` terms at a corner, optionally cut off.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerFunction<T> {
    pub frame: CornerFrame<T>,
    pub terms: Vec<(T, T)>,
    pub cutoff: Option<T>,
}

impl<T: Real> CornerFunction<T> {
    /// Value, gradient and Hessian in global coordinates.
    pub fn jet(&self, p: Point2<T>) -> Jet<T> {
        let (r, theta) = self.frame.polar(p);
        let mut local = Jet::zero();
        for &(c, beta) in &self.terms {
            let j = imag_power_jet(r, theta, beta);
            local.value += c * j.value;
            local.grad = local.grad + j.grad * c;
            for a in 0..2 {
                for b in 0..2 {
                    local.hess[a][b] += c * j.hess[a][b];
                }
            }
        }
        if let Some(a) = self.cutoff {
            let (eta, d1, d2) = cutoff(r, a);
            if d1 != T::zero() || d2 != T::zero() {
                let q = self.frame.local(p);
                let u = q * (T::one() / r);
                let grad_eta = u * d1;
                let uu = [[u.x * u.x, u.x * u.y], [u.y * u.x, u.y * u.y]];
                let w = local;
                local.value = w.value * eta;
                local.grad = w.grad * eta + grad_eta * w.value;
                for a in 0..2 {
                    for b in 0..2 {
                        let id = if a == b { T::one() } else { T::zero() };
                        let h_eta = d2 * uu[a][b] + d1 / r * (id - uu[a][b]);
                        let ga = [w.grad.x, w.grad.y];
                        let ge = [grad_eta.x, grad_eta.y];
                        local.hess[a][b] = eta * w.hess[a][b] + ga[a] * ge[b] + ge[a] * ga[b] + w.value * h_eta;
                    }
                }
            } else {
                local.value *= eta;
                local.grad = local.grad * eta;
                for row in local.hess.iter_mut() {
                    for x in row.iter_mut() {
                        *x *= eta;
                    }
                }
            }
        }
        let (grad, hess) = self.frame.to_global(local.grad, local.hess);
        Jet { value: local.value, grad, hess }
    }

    pub fn value(&self, p: Point2<T>) -> T {
        self.jet(p).value
    }
}

/// `S = r^alpha sin(alpha theta) eta(r)` with the cutoff supported in `r < a`.
pub fn singular_function<T: Real>(frame: CornerFrame<T>, alpha: T, a: T) -> Result<CornerFunction<T>, SingularError> {
    if !(a > T::zero()) || a > frame.clearance {
        return Err(SingularError::CutoffTooLarge { radius: a.as_f64(), clearance: frame.clearance.as_f64() });
    }
    Ok(CornerFunction { frame, terms: vec![(T::one(), alpha)], cutoff: Some(a) })
}

/// Uncut harmonic singular function `r^alpha sin(alpha theta)`.
pub fn singular_harmonic<T: Real>(frame: CornerFrame<T>, alpha: T) -> CornerFunction<T> {
    CornerFunction { frame, terms: vec![(T::one(), alpha)], cutoff: None }
}

/// `z = (r^-alpha - r^alpha) sin(alpha theta)`, harmonic and vanishing on the
/// sector edges and on the unit circle.
pub fn kernel_function<T: Real>(frame: CornerFrame<T>, alpha: T) -> CornerFunction<T> {
    // r^-alpha sin(alpha theta) = -Im(zeta^-alpha)
    CornerFunction { frame, terms: vec![(-T::one(), -alpha), (-T::one(), alpha)], cutoff: None }
}

/// Largest integer strictly below `(1 + s) omega / pi`.
pub fn nu_s<T: Real>(omega: T, s: T) -> i64 {
    let x = ((T::one() + s) * omega / T::PI()).as_f64();
    let near = x.round();
    if (x - near).abs() < INTEGER_GUARD {
        near as i64 - 1
    } else {
        x.floor() as i64
    }
}

/// Exact version of [`nu_s`] for `omega = (omega_over_pi) * pi` with rational data.
pub fn nu_s_exact(omega_over_pi: Ratio<i64>, s: Ratio<i64>) -> i64 {
    let x = (Ratio::from_integer(1) + s) * omega_over_pi;
    x.ceil().to_integer() - 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDimension {
    pub dim: usize,
    /// False when the counting formula is not valid for this domain and `s`.
    pub applicable: bool,
    pub note: Option<String>,
}

/// Dimension of the space of harmonic functions in `H^-s` vanishing on the boundary.
///
/// For `-1/2 <= s <= 0` this is the number of reentrant corners; for `s > 0`
/// the sum of `nu_s` over all corners. When `s >= 1` and a corner angle equals
/// `m pi/(s+1)` for `m = 1..floor(s)` the formula does not apply.
pub fn kernel_dimension<T: Real>(d: &Domain<T>, s: T) -> KernelDimension {
    let s64 = s.as_f64();
    if s64 < -0.5 - INTEGER_GUARD {
        return KernelDimension { dim: 0, applicable: false, note: Some(format!("s = {s64} is below -1/2")) };
    }
    let angles: Vec<f64> = d.corner_angles().iter().map(|c| c.1.as_f64()).collect();
    let pi = std::f64::consts::PI;
    if s64 <= 0.0 {
        let dim = angles.iter().filter(|&&w| w > pi + INTEGER_GUARD).count();
        let note = ((s64 + 0.5).abs() < INTEGER_GUARD)
            .then(|| "s = -1/2: the reentrant-corner count is reported; the uniqueness result for H^1/2 gives {0}".into());
        return KernelDimension { dim, applicable: true, note };
    }
    let mut applicable = true;
    let mut note = None;
    if s64 >= 1.0 {
        for &w in &angles {
            for m in 1..=(s64.floor() as i64) {
                if (w - m as f64 * pi / (s64 + 1.0)).abs() < 1e-9 {
                    applicable = false;
                    note = Some(format!("angle {w} equals {m}π/(s+1)"));
                }
            }
        }
    }
    if applicable && s64.fract() != 0.0 {
        note = Some("counting formula evaluated at non-integer s".into());
    }
    let dim = angles.iter().map(|&w| nu_s(w, s64).max(0) as usize).sum();
    KernelDimension { dim, applicable, note }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalP<T> {
    /// `2 / (alpha* + 1)` for the largest reentrant angle.
    Threshold(T),
    /// No reentrant corner: no finite threshold below 4/3.
    Convex,
}

pub fn critical_p<T: Real>(d: &Domain<T>) -> CriticalP<T> {
    let wmax = d.corner_angles().iter().map(|c| c.1).fold(T::zero(), T::max);
    if wmax <= T::PI() + T::of(INTEGER_GUARD) {
        return CriticalP::Convex;
    }
    // 2/(alpha + 1) = 2w/(w + 1) with w = omega/pi, exact for rational angles
    match angle_fraction(wmax.as_f64() / std::f64::consts::PI) {
        Some(w) => {
            let p = Ratio::from_integer(2) * w / (w + Ratio::from_integer(1));
            CriticalP::Threshold(T::of(*p.numer() as f64 / *p.denom() as f64))
        }
        None => CriticalP::Threshold(T::of(2.0) / (T::PI() / wmax + T::one())),
    }
}

/// `omega/pi` as a fraction with denominator at most 360, if one is within the integer guard.
fn angle_fraction(x: f64) -> Option<Ratio<i64>> {
    (1..=360i64).find_map(|q| {
        let p = (x * q as f64).round();
        ((x - p / q as f64).abs() < INTEGER_GUARD).then(|| Ratio::new(p as i64, q))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership<T> {
    pub member: bool,
    /// `2 - p (alpha + 1)`; membership requires it to be positive.
    pub margin: T,
}

/// Whether `|grad z| ~ r^-(alpha+1)` is p-integrable near the corner.
pub fn w1p_membership<T: Real>(alpha: T, p: T) -> Membership<T> {
    let margin = T::of(2.0) - p * (alpha + T::one());
    Membership { member: margin > T::of(INTEGER_GUARD), margin }
}

/// Numerical detector: integrates `r^(1 - p(alpha+1))` over the decades
/// `[10^-(k+1), 10^-k]`, `k < decades`, and calls the integral divergent when
/// the last decade contributes at least as much as the first.
pub fn radial_divergence(alpha: f64, p: f64, decades: usize) -> bool {
    let q = p * (alpha + 1.0);
    let ln10 = std::f64::consts::LN_10;
    // r = e^u turns r^(1-q) dr into e^(u(2-q)) du
    let decade = |k: usize| {
        let (lo, hi) = (-(k as f64 + 1.0) * ln10, -(k as f64) * ln10);
        integrate_adaptive(|u: f64| (u * (2.0 - q)).exp(), lo, hi, 0.0, 1e-12).expect("smooth integrand")
    };
    let first = decade(0);
    let last = decade(decades - 1);
    last >= first
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{l_shape, make_polygon, unit_square};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn laplacian_of(f: &CornerFunction<f64>, p: Point2<f64>) -> f64 {
        f.jet(p).hess[0][0] + f.jet(p).hess[1][1]
    }

    fn l_frame() -> CornerFrame<f64> {
        CornerFrame::at_vertex(&l_shape::<f64>(), 0).unwrap()
    }

    #[test]
    fn singular_function_values() {
        let fr = l_frame();
        assert_eq!(fr.omega, 1.5 * PI);
        let s = singular_function(fr, 2.0 / 3.0, 0.5).unwrap();
        assert_eq!(s.value(Point2::new(0.0, 0.0)), 0.0);
        // theta = 0 edge is the positive x axis for the L-shape corner
        assert!(s.value(Point2::new(0.2, 0.0)).abs() < 1e-15);
        assert!(s.value(Point2::new(0.0, -0.2)).abs() < 1e-15);
        assert!(s.value(Point2::new(-0.1, 0.1)) > 0.0);
        assert!(matches!(singular_function(fr, 2.0 / 3.0, 1.5), Err(SingularError::CutoffTooLarge { .. })));
        // cutoff region: exactly zero beyond a
        assert_eq!(s.value(Point2::new(-0.4, 0.4)), 0.0);
    }

    #[test]
    fn harmonicity_at_random_points() {
        let fr = l_frame();
        let s = singular_harmonic(fr, 2.0 / 3.0);
        let z = kernel_function(fr, 2.0 / 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let r = rng.gen_range(0.1..0.9);
            let t = rng.gen_range(0.01..1.5 * PI - 0.01);
            let p = Point2::new(r * t.cos(), r * t.sin());
            assert!(laplacian_of(&s, p).abs() < 1e-9);
            assert!(laplacian_of(&z, p).abs() < 1e-9);
        }
    }

    #[test]
    fn jets_match_finite_differences() {
        let fr = l_frame();
        let s = singular_function(fr, 2.0 / 3.0, 0.8).unwrap();
        let z = kernel_function(fr, 2.0 / 3.0);
        let h = 1e-5;
        for f in [&s, &z] {
            for &(x, y) in &[(-0.3, 0.35), (0.2, 0.5), (-0.5, -0.1), (0.1, 0.05)] {
                let p = Point2::new(x, y);
                let j = f.jet(p);
                let dx = (f.value(Point2::new(x + h, y)) - f.value(Point2::new(x - h, y))) / (2.0 * h);
                let dy = (f.value(Point2::new(x, y + h)) - f.value(Point2::new(x, y - h))) / (2.0 * h);
                assert!((j.grad.x - dx).abs() < 1e-6 && (j.grad.y - dy).abs() < 1e-6);
                let gx = |q: Point2<f64>| f.jet(q).grad;
                let hxy = (gx(Point2::new(x, y + h)).x - gx(Point2::new(x, y - h)).x) / (2.0 * h);
                let hxx = (gx(Point2::new(x + h, y)).x - gx(Point2::new(x - h, y)).x) / (2.0 * h);
                assert!((j.hess[0][1] - hxy).abs() < 1e-5 && (j.hess[0][0] - hxx).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn kernel_function_vanishes_on_circle_and_edge() {
        let z = kernel_function(l_frame(), 2.0 / 3.0);
        for k in 0..20 {
            let t = 1.5 * PI * k as f64 / 19.0;
            let v = z.value(Point2::new(t.cos(), t.sin()));
            assert!(v.abs() < 1e-14, "z = {v} at theta = {t}");
            assert!(z.value(Point2::new(0.1 + 0.04 * k as f64, 0.0)).abs() < 1e-14);
            // positive inside the truncated sector
            assert!(z.value(Point2::new(0.5 * (t + 0.01).cos(), 0.5 * (t + 0.01).sin())) > 0.0 || k == 19);
        }
    }

    #[test]
    fn nu_s_examples() {
        assert_eq!(nu_s(1.5 * PI, 0.0), 1);
        assert_eq!(nu_s(0.5 * PI, 0.0), 0);
        assert_eq!(nu_s(1.5 * PI, 1.0), 2);
        assert_eq!(nu_s_exact(Ratio::new(3, 2), Ratio::from_integer(1)), 2);
        assert_eq!(nu_s_exact(Ratio::new(3, 2), Ratio::from_integer(0)), 1);
        assert_eq!(nu_s_exact(Ratio::new(1, 2), Ratio::from_integer(0)), 0);
    }

    #[test]
    fn kernel_dimensions() {
        assert_eq!(kernel_dimension(&unit_square::<f64>(), 0.0).dim, 0);
        let l = l_shape::<f64>();
        assert_eq!(kernel_dimension(&l, 0.0).dim, 1);
        assert_eq!(kernel_dimension(&l, -0.25).dim, 1);
        // s = 2: 3pi/2 gives 3 * 3/2 = 4.5, nu = 4; each right angle gives nu = 1
        let k2 = kernel_dimension(&l, 2.0);
        assert_eq!(k2.dim, 9);
        assert!(k2.applicable);
        // s = 1: pi/2 = 1 pi/(1+1) is an excluded angle
        assert!(!kernel_dimension(&unit_square::<f64>(), 1.0).applicable);
        assert!(!kernel_dimension(&l, 1.0).applicable);
        assert!(!kernel_dimension(&l, -0.75).applicable);
    }

    #[test]
    fn critical_exponents() {
        match critical_p(&l_shape::<f64>()) {
            CriticalP::Threshold(p) => assert_eq!(p, 1.2),
            CriticalP::Convex => panic!(),
        }
        assert_eq!(critical_p(&unit_square::<f64>()), CriticalP::Convex);
        let w = 1.99 * PI;
        let slit = make_polygon(&[
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(-1.0, 1.0),
            Point2::new(-1.0, -1.0),
            Point2::new(1.0, -1.0),
            Point2::new(1.0, (w - 2.0 * PI).tan()),
        ])
        .unwrap();
        let CriticalP::Threshold(p) = critical_p(&slit) else { panic!() };
        assert!((p - 2.0 / (1.0 / 1.99 + 1.0)).abs() < 1e-12);
        assert!((p - 1.3311).abs() < 1e-4);
    }

    #[test]
    fn membership_and_detector() {
        let a = 2.0 / 3.0;
        let m = w1p_membership::<f64>(a, 1.19);
        assert!(m.member && (m.margin - 0.0166667).abs() < 1e-6);
        assert!(!w1p_membership(a, 1.21).member);
        assert!(!w1p_membership(a, 1.2).member);
        assert!(!radial_divergence(a, 1.19, 100));
        assert!(radial_divergence(a, 1.21, 100));
        for i in 0..10 {
            for j in 0..10 {
                let alpha = 0.5 + 0.05 * (i as f64 + 0.5);
                let p = 1.0 + 0.1 * (j as f64 + 0.5);
                let m = w1p_membership(alpha, p);
                if m.margin.abs() >= 1e-3 {
                    assert_eq!(m.member, !radial_divergence(alpha, p, 100));
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn nu_s_monotone(w in 0.01..6.28f64, dw in 0.0..0.5f64, s in -0.5..2.0f64, ds in 0.0..1.0f64) {
                prop_assert!(nu_s(w, s) <= nu_s(w, s + ds));
                prop_assert!(nu_s(w, s) <= nu_s((w + dw).min(6.2831), s));
            }

            #[test]
            fn nu_s_matches_exact_on_rationals(num in 1i64..39, s in 0i64..4) {
                // omega = (num/20) pi
                let exact = nu_s_exact(Ratio::new(num, 20), Ratio::from_integer(s));
                prop_assert_eq!(nu_s(num as f64 / 20.0 * PI, s as f64), exact);
            }
        }
    }
}
