//! Streaming dimension reduction and online Gaussian-mixture HMM tiling.
//!
//! The crate is `no_std` with `alloc`; enable the `std` feature (default) or
//! `libm` for the floating-point intrinsics.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub(crate) mod math;
pub mod model;
pub mod predict;
pub mod reduce;
pub mod simulate;
#[cfg(feature = "serde")]
pub(crate) mod serde_float;

pub use error::{Error, Result};
