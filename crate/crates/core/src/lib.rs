//! Heat kernel regression on triangle meshes.
//!
//! The crate discretizes the Laplace–Beltrami operator with the cotan FEM
//! pair (`A`, `C`), solves `Cψ = λAψ` for the low end of the spectrum, and
//! smooths per-vertex data three ways: the eigenfunction expansion weighted
//! by `e^{−λσ}`, forward-Euler diffusion with the same matrices, and
//! iterated Gaussian kernel smoothing over one-rings. Around that sit random
//! field theory thresholds for F-fields, binary-volume topology correction
//! with marching cubes, and the sphere and T-junction experiments.

// Negated comparisons reject NaN along with out-of-range values; matrix
// kernels index several arrays with one loop variable.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod eigen;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod rft;
pub mod simulate;
pub mod smooth;
pub mod sparse;
pub mod sphere;
pub mod volume;

pub use error::{Error, Result};
