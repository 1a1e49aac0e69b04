//! Downlink spectral efficiency of rate splitting versus plain linear
//! precoding in single-cell TDD massive MIMO with pilot contamination.
//!
//! The pipeline is statistics-only: channel correlations feed MMSE
//! estimation statistics, which give closed-form hardening-bound SINR
//! coefficients, which the power allocators optimize.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the algebra.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod chanstat;
pub mod convex;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod par;
pub mod params;
pub mod powalloc;
pub mod precoding;
pub mod se_eval;

pub use error::{Error, Result};
