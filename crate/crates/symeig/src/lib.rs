//! Symmetry-based decomposition of grid-discretized differential
//! eigenvalue problems.
//!
//! The library splits an eigenvalue problem with point-group symmetry into
//! independent reduced systems of size `d_nu * N0` (one per irreducible
//! representation), solves them with an implicitly restarted Lanczos
//! method, and merges the labeled spectra. It also carries the flops and
//! speedup model of the decomposition for performance prediction.

pub mod assembly;
pub mod dense;
pub mod driver;
pub mod eigensolve;
pub mod error;
pub mod grid;
pub mod group;
pub mod perfmodel;
pub mod sabasis;
pub mod sparse;

pub use error::{Error, Result};
