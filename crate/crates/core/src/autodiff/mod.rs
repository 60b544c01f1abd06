//! Reverse-mode differentiation of the training objective and a
//! finite-difference checker for it.

mod check;
mod nll;
mod tape;

pub use check::{grad_check, grad_check_fn, GRAD_CHECK_SAMPLES};
pub use nll::{forward_nll, loss_and_grad, record_embedding, RecordedNll};
pub use tape::{Tape, Var};
