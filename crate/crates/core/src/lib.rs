//! Alias-free generator building blocks.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
pub mod filter;
pub mod fourier;
pub mod plan;
pub mod map;
pub mod metrics;
pub mod math;
mod kernels;
pub mod nonlinearity;
pub mod resample;
pub mod spectra;
pub mod synthesis;

pub use error::{Error, Result};
