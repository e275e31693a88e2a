//! Spectral idempotents of operators of the form `T = D_Λ + Σ_k u_k ⊗ v_k`.
//!
//! The half-disc idempotents `J_ξ^±` are assembled from the low-rank core
//! matrix `I + Y(z)X(z)` along a closed contour, so the cost per quadrature
//! node is `O(N·R + R³)` instead of a dense `O(N³)` resolvent. Every
//! construction can be checked against the dense ground truth in [`oracle`].
//!
//! Module map:
//! - [`model`]: operator data, summability gates, index sets.
//! - [`contour`]: the curves `γ_ξ^±`, branch square root, adaptive quadrature.
//! - [`resolvent`]: Borel series, core matrix, formal resolvent, symmetrized operator.
//! - [`idempotent`]: decomposability checks, `J_ξ^±`, pair verification, rectangles.
//! - [`localspec`]: spectral-subspace membership certificates.
//! - [`oracle`]: dense eigensystems, Riesz projectors, commutant basis.

// `!(x <= tol)` is how NaN fails a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub use num_complex::Complex64 as c64;

pub mod contour;
pub mod error;
pub mod generate;
pub mod idempotent;
pub mod io;
pub mod linalg;
pub mod localspec;
pub mod model;
pub mod oracle;
pub mod resolvent;

pub use error::{Error, Result};
