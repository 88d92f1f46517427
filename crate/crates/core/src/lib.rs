//! Numerical laboratory for fractional Sobolev norms, corner singularities and
//! trace blow-up on sawtooth domains in the plane.

pub mod counterexample;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod meshing;
pub mod norms;
pub mod quadrature;
pub mod scalar;
pub mod singular;

pub use geometry::{Domain, GeometryError, Point2, SawtoothParams};
pub use scalar::Real;

pub type Point2d = Point2<f64>;
pub type Domain64 = Domain<f64>;
pub type Domain32 = Domain<f32>;
pub type Mesh64 = meshing::Mesh<f64>;
pub type Mesh32 = meshing::Mesh<f32>;
