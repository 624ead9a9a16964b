//! Truncated Gaussian infinite factor analysis (TGIFA) for imputing
//! non-negative, high-dimensional data with values missing either at random
//! or below a limit of detection.
//!
//! The crate is `no_std` and needs only `alloc`. The `parallel` feature
//! splits column and row updates across a rayon pool; keyed random
//! substreams keep the output identical to a sequential run.

#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(feature = "parallel")]
extern crate std;

pub mod baselines;
pub mod imputation;
pub mod linalg;
pub mod rng;
pub mod sampler;
pub mod simstudy;
pub mod special;
pub mod trunc;
pub mod types;

pub use rng::{RngStream, StreamKey};
pub use types::*;
