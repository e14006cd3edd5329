//! Exact enumeration and constant prediction for a family of torsor
//! counting problems attached to three spherical Fano threefolds.
//!
//! The crate has three layers:
//! - exact integer enumeration of torsor points under height, coprimality
//!   and thin-set conditions (`enumerate`), with a slow reference counter;
//! - exact arithmetic identities backing the analysis: complete character
//!   sums (`char_sums`) and local density series (`singular`);
//! - the predicted leading constant, split into a rational polytope factor,
//!   a finite product of p-adic densities and an archimedean integral
//!   (`peyre`), plus regression fitting of the ladder data (`report`).

pub mod arith;
pub mod peyre;
pub mod report;
pub mod char_sums;
pub mod enumerate;
pub mod singular;
pub mod variety;

pub use variety::{HeightBound, SpecError, ThinPredicate, VarietySpec};
