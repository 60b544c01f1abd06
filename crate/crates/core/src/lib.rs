//! Scanpath modelling as a marked neural temporal point process.
//!
//! Fixation durations follow a log-normal mixture and fixation positions a
//! bivariate Gaussian mixture, both conditioned on a recurrent encoding of
//! the scanpath so far and a semantic embedding of the stimulus read out
//! from a CNN feature volume. The crate also carries the scanpath
//! similarity metrics, the score-distribution KL protocol, saliency metrics
//! and scanpath statistics used to evaluate generated scanpaths.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod autodiff;
pub mod corpus;
pub mod data;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod params;
pub mod plot;
pub mod readout;
pub mod saliency;
pub mod sampler;
pub mod seed;
pub mod toy;
pub mod tpp;
pub mod train;
pub mod volume;

pub use error::{Error, Result};
