//! Trace finite element method for the Laplace-Beltrami equation and
//! eigenvalue problem on implicitly defined closed surfaces.
//!
//! The surface is never meshed: a background box is tiled with tetrahedra,
//! the elements cut by the zero level set carry a standard Lagrange space,
//! and all surface integrals are evaluated by quadrature rules whose points
//! lie exactly on the smooth surface. The resulting stiffness/mass pencil
//! may be singular; the finite (true) eigenvalues are extracted either by a
//! Cholesky reduction (when the mass matrix is definite) or by a
//! rank-completing perturbation of the singular pencil.

pub mod assembly;
pub mod dense;
pub mod error;
pub mod fe_space;
pub mod harness;
mod lapack;
pub mod levelset;
pub mod mesh;
pub mod quadrature;
pub mod solvers;

pub use error::{Error, Result};
