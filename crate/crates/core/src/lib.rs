//! Least-squares finite element discretizations of the Dirichlet Laplace
//! eigenvalue problem on planar triangulations.
//!
//! The crate covers the whole numerical pipeline and nothing else: mesh
//! generation and refinement, the discrete spaces (P1, vector P1,
//! Raviart–Thomas, Brezzi–Douglas–Marini, P0), assembly of the bilinear
//! forms, the block eigenvalue pencils of the FOSLS / transpose FOSLS / LL*
//! / curl-enriched formulations together with their Schur reductions, and
//! the residual error estimator driving adaptive refinement.
//!
//! It is `no_std` and only needs `alloc`; file formats, the command line and
//! the experiment drivers live in the `lseig` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod eigsolve;
pub mod error;
pub mod estimator;
pub mod fespace;
pub mod formulations;
pub mod mesh;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};

/// A point (or vector) in the plane.
pub type Point = [f64; 2];
