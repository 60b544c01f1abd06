//! Marked temporal point process core: recurrent history encoding, context
//! formation, mixture heads, exact log-densities and sampling.
//!
//! Durations follow a log-normal mixture, positions a diagonal bivariate
//! Gaussian mixture in image coordinates normalized to `[0, 1]²`. Both
//! heads are affine maps of the context `c = [h ‖ z]`.

mod gru;
mod mixture;

pub use gru::{gru_step, init_history, EventInput, GruParams, HistoryState};
pub use mixture::{
    gmm_logpdf, gmm_params, gmm_sample, lgmm_logpdf, lgmm_params, lgmm_sample, Bounds,
    Gmm2dParams, HeadParams, LgmmParams,
};

use crate::error::{Error, Result};
use crate::readout::SemanticEmbedding;

/// Context vector `[h ‖ z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    c: Vec<f64>,
    d_hist: usize,
}

impl Context {
    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    /// Splits back into the history and semantic parts.
    pub fn split(&self) -> (&[f64], &[f64]) {
        self.c.split_at(self.d_hist)
    }
}

pub fn make_context(h: &HistoryState, z: &SemanticEmbedding) -> Context {
    let mut c = Vec::with_capacity(h.0.len() + z.0.len());
    c.extend_from_slice(&h.0);
    c.extend_from_slice(&z.0);
    Context {
        c,
        d_hist: h.0.len(),
    }
}

/// Like [`make_context`] but checks the parts against the expected sizes.
pub fn make_context_checked(
    h: &HistoryState,
    z: &SemanticEmbedding,
    d_hist: usize,
    d_img: usize,
) -> Result<Context> {
    if h.0.len() != d_hist || z.0.len() != d_img {
        return Err(Error::DimensionMismatch(format!(
            "context parts ({}, {}) != expected ({d_hist}, {d_img})",
            h.0.len(),
            z.0.len()
        )));
    }
    Ok(make_context(h, z))
}
