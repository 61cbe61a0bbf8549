//! Immersed C0 interior-penalty finite elements for two-dimensional
//! biharmonic interface problems on unfitted triangular meshes.
//!
//! The crate builds least-squares immersed P2/P3 spaces on a uniform
//! unfitted triangulation of [-1,1]^2, assembles the penalized fourth-order
//! system, solves it directly, and reports interpolation/solution errors and
//! convergence orders for a set of benchmark interface geometries (line,
//! moving line, parabola, circle, flower).
//!
//! Modules follow the pipeline: [`geometry`] resolves the implicit interface
//! against triangles, [`mesh`] builds the unfitted triangulation and DOF
//! numbering, [`quadrature`] integrates on curved subregions and arcs,
//! [`space`] constructs the immersed bases, [`assembly`] and [`solver`]
//! produce and solve the linear system, [`analysis`] measures errors, and
//! [`scenarios`] wires the shipped benchmark studies together.

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod quadrature;
pub mod scenarios;
pub mod solver;
pub mod space;

pub use error::{Error, Result};
