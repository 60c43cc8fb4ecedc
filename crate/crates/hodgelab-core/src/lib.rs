//! Discrete exterior calculus on cubical grids together with the analysis
//! toolkit around it: variable-exponent norms, volume and layer potentials,
//! Hodge-Laplacian solvers, decompositions and a localized parametrix.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]
// `Float` supplies the libm-backed float methods; it shows up as unused
// whenever std happens to be linked into the build.
#![allow(unused_imports)]

extern crate alloc;

pub mod decomposition;
pub mod error;
pub mod forms;
pub mod green_box;
pub mod hodge;
pub mod exponent;
pub mod lattice;
pub mod linalg;
pub mod parametrix;
pub mod potentials;
pub mod rng;

pub use error::{Error, Result};
pub use lattice::{Lattice, ScalarField};
