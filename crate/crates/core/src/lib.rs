//! Numerical laboratory for viscous Hamilton–Jacobi equations on the flat
//! torus and their Fokker–Planck adjoints.

pub mod counterexamples;
pub mod duality;
pub mod error;
pub mod estimates;
pub mod experiment;
pub mod fit;
pub mod fp;
pub mod grid;
pub mod hamiltonian;
pub mod hj;
pub mod linsolve;
pub(crate) mod quad;
pub(crate) mod special;

pub use error::{Error, Result};
