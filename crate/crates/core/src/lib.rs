//! Graded tetrahedral finite elements for periodic Schrödinger operators
//! `-Δ + δ ψ(r) r⁻² + L` on the 3-torus.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches the
//! filesystem, clocks or the command line lives in the `gradfem` companion
//! crate.
//!
//! Pipeline, bottom-up:
//!
//! * [`mesh`]: the 12-tetrahedron periodic cube mesh and its integrity checks;
//! * [`refine`]: k-graded refinement toward singular points;
//! * [`fespace`]: periodic P1 spaces, interpolation and prolongation;
//! * [`quadrature`], [`sparse`], [`assembly`]: discrete operators;
//! * [`solve`]: Jacobi-PCG and eigenvalue iterations;
//! * [`analysis`]: weighted norms and convergence studies.
#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod analysis;
pub mod assembly;
mod error;
pub mod fespace;
pub mod geometry;
mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod refine;
pub mod solve;
pub mod sparse;

pub use error::{Error, Result};
pub use geometry::Point3;
