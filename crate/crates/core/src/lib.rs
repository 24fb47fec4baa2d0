//! Verification engine for Lie-algebroid calculus on local trivializations.
//!
//! The crate builds finite-dimensional, single-chart ("desk scale") models of
//! anchored bundles and Lie algebroids, the exterior calculus over them,
//! prolongations over fibrations, nonlinear connections, and finite
//! projective/direct towers — and numerically certifies the identities these
//! structures are supposed to satisfy (antisymmetry, Leibniz, Jacobi, anchor
//! morphism, d² = 0, vertical closure, bonding compatibility) at configurable
//! tolerances over deterministic sample sets.
//!
//! Module map:
//! - [`jets`]: forward-mode jet arithmetic; all derivatives flow through it.
//! - [`field`]: smooth fields on chart boxes (the generic evaluation layer).
//! - [`sample`]: deterministic low-discrepancy sampling.
//! - [`algebroid`]: local Lie-algebroid models, brackets, defect operations.
//! - [`forms`]: exterior calculus over a bracket context.
//! - [`prolong`]: prolongation over a fibration, projectable sections.
//! - [`connect`]: nonlinear connections via Christoffel fields.
//! - [`towers`]: finite projective/direct sequences with bonding checks.
//! - [`scenario`] / [`suites`] / [`report`]: the CLI-facing verification
//!   surface.

pub mod algebroid;
pub mod connect;
pub mod error;
pub mod field;
pub mod forms;
pub mod jets;
pub mod prolong;
pub mod report;
pub mod sample;
pub mod scenario;
pub mod suites;
pub mod towers;

pub use error::{Error, Result};
