//! Cone-beam CT back projection (the FDK back-projection step) with a
//! reference kernel, an optimized kernel family, a synthetic dataset
//! generator, a benchmark harness and an analytical performance model.
//!
//! The guide in `book/` walks through each part; its code listings are
//! compiled and run as doc-tests of this crate.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernel_opt;
pub mod kernel_ref;
pub mod membench;
pub mod perfmodel;

pub use error::{Error, Result};

// `cargo test --doc` runs the guide's listings.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/reference-kernel.md")]
    mod reference_kernel {}
    #[doc = include_str!("../../../book/src/optimized-kernel.md")]
    mod optimized_kernel {}
    #[doc = include_str!("../../../book/src/performance-model.md")]
    mod performance_model {}
    #[doc = include_str!("../../../book/src/benchmarking.md")]
    mod benchmarking {}
}
