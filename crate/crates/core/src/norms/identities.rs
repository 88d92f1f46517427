//! Boundary identities and Nečas-type boundary quantities.

use crate::fem::Field;
use crate::geometry::Point2;
use crate::meshing::EdgeGeometry;
use crate::scalar::{ordered_sum, Real};

use super::{edge_integral, EdgeRule, NormContext, NormError};

/// Both sides of an integral identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck<T> {
    pub lhs: T,
    pub rhs: T,
}

impl<T: Real> IdentityCheck<T> {
    /// `|lhs - rhs| / max(|lhs|, |rhs|)`, zero when both sides vanish.
    pub fn relative_gap(&self) -> T {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == T::zero() {
            T::zero()
        } else {
            (self.lhs - self.rhs).abs() / scale
        }
    }
}

/// `∫_Γ f` over the boundary edges with the given tag. The integrand receives
/// the edge, the adjacent element, barycentric coordinates and the point.
pub fn boundary_integral<T: Real>(
    ctx: &NormContext<T>,
    tag: Option<&str>,
    rule: EdgeRule,
    f: &(dyn Fn(&EdgeGeometry<T>, usize, [T; 3], Point2<T>) -> T + Sync),
) -> Result<T, NormError> {
    let edges = ctx.mesh().boundary_edges(tag)?;
    let mut parts = Vec::with_capacity(edges.len());
    for e in &edges {
        parts.push(edge_integral(ctx, e, rule, &|t, l, p| f(e, t, l, p))?);
    }
    Ok(ordered_sum(&parts))
}

/// Rellich identity for `u = 0` on Γ and `h = x - center`:
/// `∫_Γ h·n (∂_n u)² = ∫_Ω 2 Δu (h·∇u)`.
///
/// `laplacian` supplies `Δu`; for a discrete solution of `-Δu = f` pass `-f`.
pub fn rellich_identity<T: Real>(
    ctx: &NormContext<T>,
    u: &dyn Field<T>,
    laplacian: &(dyn Fn(Point2<T>) -> T + Sync),
    center: Point2<T>,
    rule: EdgeRule,
) -> Result<IdentityCheck<T>, NormError> {
    let lhs = boundary_integral(ctx, None, rule, &|e, t, l, p| {
        let dn = u.jet(t, l, p).grad.dot(e.normal);
        (p - center).dot(e.normal) * dn * dn
    })?;
    // for h = x - c the terms 2 ∂_k h · ∂_k u · ∇u and -(div h)|∇u|² cancel in the plane
    let rhs = ctx.integrate(|t, l, p| T::of(2.0) * laplacian(p) * (p - center).dot(u.jet(t, l, p).grad));
    Ok(IdentityCheck { lhs, rhs })
}

/// Green formula `∫ v Δφ - ∫ Δv φ = ∫_Γ v ∂_n φ` for `φ = 0` on Γ.
///
/// `v` must carry second derivatives; `laplacian_phi` supplies `Δφ`.
pub fn green_identity<T: Real>(
    ctx: &NormContext<T>,
    v: &dyn Field<T>,
    phi: &dyn Field<T>,
    laplacian_phi: &(dyn Fn(Point2<T>) -> T + Sync),
    rule: EdgeRule,
) -> Result<IdentityCheck<T>, NormError> {
    if !v.has_hessian() {
        return Err(NormError::HessOnP1);
    }
    let lhs = ctx.integrate(|t, l, p| {
        let jv = v.jet(t, l, p);
        let lap_v = jv.hess[0][0] + jv.hess[1][1];
        jv.value * laplacian_phi(p) - lap_v * phi.jet(t, l, p).value
    });
    let rhs = boundary_integral(ctx, None, rule, &|e, t, l, p| v.jet(t, l, p).value * phi.jet(t, l, p).grad.dot(e.normal))?;
    Ok(IdentityCheck { lhs, rhs })
}

/// Boundary quantities entering the Nečas estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NecasQuantities<T> {
    /// `‖∂_n u‖_{L²(Γ)}`
    pub normal: T,
    /// `inf_k ‖u + k‖_{H¹(Γ)}`
    pub trace_h1: T,
    /// `‖Δu‖_{L²(Ω)}`
    pub laplacian: T,
}

impl<T: Real> NecasQuantities<T> {
    /// `‖∂_n u‖ / (inf_k ‖u + k‖_{H¹(Γ)} + ‖Δu‖)`
    pub fn normal_ratio(&self) -> T {
        self.normal / (self.trace_h1 + self.laplacian)
    }

    /// `inf_k ‖u + k‖_{H¹(Γ)} / (‖∂_n u‖ + ‖Δu‖)`
    pub fn tangential_ratio(&self) -> T {
        self.trace_h1 / (self.normal + self.laplacian)
    }
}

pub fn necas_quantities<T: Real>(
    ctx: &NormContext<T>,
    u: &dyn Field<T>,
    laplacian: &(dyn Fn(Point2<T>) -> T + Sync),
    rule: EdgeRule,
) -> Result<NecasQuantities<T>, NormError> {
    let normal = boundary_integral(ctx, None, rule, &|e, t, l, p| {
        let d = u.jet(t, l, p).grad.dot(e.normal);
        d * d
    })?;
    let tangential = boundary_integral(ctx, None, rule, &|e, t, l, p| {
        let d = u.jet(t, l, p).grad.dot(e.tangent);
        d * d
    })?;
    let sq = boundary_integral(ctx, None, rule, &|_, t, l, p| {
        let v = u.jet(t, l, p).value;
        v * v
    })?;
    let mean = boundary_integral(ctx, None, rule, &|_, t, l, p| u.jet(t, l, p).value)?;
    let length = ctx.mesh().boundary_edges(None)?.iter().map(|e| e.length).fold(T::zero(), |a, b| a + b);
    // the infimum over constants is attained at minus the boundary mean
    let centered = (sq - mean * mean / length).max(T::zero());
    let lap = ctx.integrate(|_, _, p| {
        let v = laplacian(p);
        v * v
    });
    Ok(NecasQuantities { normal: normal.sqrt(), trace_h1: (centered + tangential).sqrt(), laplacian: lap.sqrt() })
}
