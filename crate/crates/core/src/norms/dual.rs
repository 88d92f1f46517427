//! Discrete dual norms of gradients against P1 test functions.

use std::sync::Arc;

use crate::fem::{assemble, build_space, FeFunction, FeSpace, MeshQuadrature, OperatorKind};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::meshing::Mesh;
use crate::scalar::{ordered_sum, Real};

use super::{gagliardo_gram, GagliardoOptions, NormError, MAX_GRAM_DOFS};

/// Test space of the dual norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualVariant {
    /// Test functions vanish on the boundary; at `s = 1/2` the Gram matrix
    /// carries the extra `∫ φψ/ϱ` term.
    ZeroTrace,
    /// All P1 functions with the plain `H^{1-s}` inner product.
    Full,
}

enum Gram<T> {
    /// `s = 1`: elementwise L² projection onto the space of gradients.
    Broken,
    Dense { dofs: Vec<usize>, chol: Cholesky<T> },
}

/// Factorized Gram matrix of the `H^{1-s}` inner product, reusable for many functions on one mesh.
pub struct DualNormOperator<T> {
    test: Arc<FeSpace<T>>,
    gram: Gram<T>,
}

impl<T: Real> DualNormOperator<T> {
    pub fn new(mesh: &Arc<Mesh<T>>, s: T, variant: DualVariant, opts: &GagliardoOptions) -> Result<Self, NormError> {
        if !(s >= T::zero() && s <= T::one()) {
            return Err(NormError::BadIndex(s.as_f64()));
        }
        let test = build_space(mesh.clone(), 1)?;
        if s == T::one() {
            return Ok(Self { test, gram: Gram::Broken });
        }
        let n = test.dof_count();
        if n > MAX_GRAM_DOFS {
            return Err(NormError::GramAssemblyBudget { dofs: n, limit: MAX_GRAM_DOFS });
        }
        let mut g = if s == T::zero() {
            let mut g = DenseMatrix::zeros(n);
            g.add_sparse(test.stiffness(), T::one());
            g
        } else {
            gagliardo_gram(&test, T::one() - s, opts, MAX_GRAM_DOFS)?
        };
        g.add_sparse(test.mass(), T::one());
        let half = (s - T::of(0.5)).abs() < T::of(1e-12);
        if half && variant == DualVariant::ZeroTrace {
            let inv = |p| T::one() / test.distance_to_boundary(p);
            let w = assemble(&test, OperatorKind::WeightedMass(&inv))?;
            g.add_sparse(&w, T::one());
        }
        let dofs: Vec<usize> = match variant {
            DualVariant::ZeroTrace => test.interior_dofs().to_vec(),
            DualVariant::Full => (0..n).collect(),
        };
        let mut sub = DenseMatrix::zeros(dofs.len());
        for (a, &i) in dofs.iter().enumerate() {
            for (b, &j) in dofs.iter().enumerate() {
                *sub.at_mut(a, b) = g.at(i, j);
            }
        }
        let chol = sub.cholesky()?;
        Ok(Self { test, gram: Gram::Dense { dofs, chol } })
    }

    pub fn test_space(&self) -> &Arc<FeSpace<T>> {
        &self.test
    }

    /// `(Σ_c F_cᵀ G⁻¹ F_c)^{1/2}` with `F_c,i = ∫ ∂_c u φ_i`.
    pub fn norm(&self, u: &FeFunction<T>) -> Result<T, NormError> {
        let mesh = self.test.mesh();
        if !(Arc::ptr_eq(u.space.mesh(), mesh) || u.space.mesh().as_ref() == mesh.as_ref()) {
            return Err(NormError::Unsupported("function lives on a different mesh than the test space".into()));
        }
        let quad = MeshQuadrature::uniform(mesh, 2);
        match &self.gram {
            Gram::Broken => {
                let parts = u.space.map_elements(|t| {
                    let g = u.space.geom(t);
                    // F_a = ∫_K ∂u λ_a; P1 gradients are constant, P2 gradients linear
                    let mut f = [[T::zero(); 3]; 2];
                    for &(l, w) in quad.points(t) {
                        let d = u.space.local_jet(&u.coeffs, t, l).grad;
                        for a in 0..3 {
                            f[0][a] += w * g.area * d.x * l[a];
                            f[1][a] += w * g.area * d.y * l[a];
                        }
                    }
                    if u.space.order() == 1 {
                        let sx: T = f[0].iter().copied().sum();
                        let sy: T = f[1].iter().copied().sum();
                        return (sx * sx + sy * sy) / g.area;
                    }
                    // inverse of the local mass matrix (|K|/12)(I + J) is (3/|K|)(4I - J)
                    let mut v = T::zero();
                    for fc in &f {
                        let total: T = fc.iter().copied().sum();
                        let quad_form: T = fc.iter().map(|&x| x * x).sum();
                        v += T::of(3.0) / g.area * (T::of(4.0) * quad_form - total * total);
                    }
                    v
                });
                Ok(ordered_sum(&parts).sqrt())
            }
            Gram::Dense { dofs, chol } => {
                let n = self.test.dof_count();
                let parts = u.space.map_elements(|t| {
                    let mut f = [[T::zero(); 3]; 2];
                    let area = u.space.geom(t).area;
                    for &(l, w) in quad.points(t) {
                        let d = u.space.local_jet(&u.coeffs, t, l).grad;
                        for a in 0..3 {
                            f[0][a] += w * area * d.x * l[a];
                            f[1][a] += w * area * d.y * l[a];
                        }
                    }
                    f
                });
                let mut fx = vec![T::zero(); n];
                let mut fy = vec![T::zero(); n];
                for (t, f) in parts.iter().enumerate() {
                    for (a, &i) in self.test.elem_dofs(t).iter().enumerate() {
                        fx[i] += f[0][a];
                        fy[i] += f[1][a];
                    }
                }
                let rx: Vec<T> = dofs.iter().map(|&i| fx[i]).collect();
                let ry: Vec<T> = dofs.iter().map(|&i| fy[i]).collect();
                Ok((chol.inverse_quadratic_form(&rx) + chol.inverse_quadratic_form(&ry)).sqrt())
            }
        }
    }
}

/// One-shot dual gradient norm; build a [`DualNormOperator`] to reuse the factorization.
pub fn dual_gradient_norm<T: Real>(u: &FeFunction<T>, s: T, variant: DualVariant, opts: &GagliardoOptions) -> Result<T, NormError> {
    DualNormOperator::new(u.space.mesh(), s, variant, opts)?.norm(u)
}
