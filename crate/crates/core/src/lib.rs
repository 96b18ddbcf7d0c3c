//! Eigenvalue coincidences between a complex `n x n` matrix and its
//! `(n-1) x (n-1)` cutoff, together with the catalog of flags and
//! θ-stable parabolic subalgebras that organizes them under
//! `K = GL(n-1) x GL(1)`.

pub mod canonical;
pub mod cli;
pub mod flags;
pub mod linalg;
pub mod orbits;
pub mod spectra;

pub use linalg::{CMatrix, Spectrum, Tolerances, C64};
