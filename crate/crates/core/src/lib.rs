//! Local constant and local bilinear multiple-output quantile/depth
//! regression.
//!
//! The crate fits kernel-weighted directional quantile hyperplanes by
//! check-loss minimization, extracts conditional quantile hyperplanes at a
//! conditioning point `w0`, and assembles bivariate conditional
//! halfspace-depth contours ("cuts") from them.

#![allow(
    clippy::too_many_arguments,
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord
)]

pub mod contours;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod kernels;
pub mod qr_solver;
pub mod simlab;

pub use error::{Error, Result};

/// Library version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
