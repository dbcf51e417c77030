//! Saito-type sets that contain approximate arithmetic patches in every
//! direction while keeping small Assouad dimension.
//!
//! - [`directions`]: the fixed enumeration of rational directions and of their m-tuples.
//! - [`construction`]: the truncated set `K` of segments or diamonds, with membership.
//! - [`patches`]: arithmetic patches, the exact (k, eps, E)-AP verifier and certified finders.
//! - [`covering`]: covering-number brackets and the analytic cover bound.
//! - [`assouad`]: local-exponent scans and finite-k lower-bound certificates.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assouad;
pub mod cli;
pub mod construction;
pub mod covering;
pub mod directions;
pub mod error;
pub mod geometry;
pub mod io;
pub mod patches;

pub use error::{ApkError, Result};

/// Environment variable overriding sample and cell budgets.
pub const BUDGET_ENV: &str = "APK_BUDGET";

/// Budget from `APK_BUDGET`, when set to a positive integer.
pub fn budget_from_env() -> Option<u64> {
    std::env::var(BUDGET_ENV).ok()?.trim().parse().ok().filter(|&b: &u64| b > 0)
}
