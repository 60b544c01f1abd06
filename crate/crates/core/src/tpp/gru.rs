use crate::error::{Error, Result};
use crate::nn::{sigmoid, Affine};
use crate::params::Layout;

/// Recurrent state `h_n` summarising the events seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState(pub Vec<f64>);

impl HistoryState {
    pub fn zeros(d: usize) -> Self {
        HistoryState(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Recurrent-cell input for one event: position normalized by the image
/// size and the log of the inter-event time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventInput {
    pub x_norm: f64,
    pub y_norm: f64,
    pub log_tau: f64,
}

impl EventInput {
    pub fn new(x_norm: f64, y_norm: f64, tau: f64) -> Self {
        EventInput {
            x_norm,
            y_norm,
            log_tau: tau.ln(),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x_norm, self.y_norm, self.log_tau]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GruParams<'a> {
    pub embed: Affine<'a>,
    pub start_token: &'a [f64],
    pub update: Affine<'a>,
    pub reset: Affine<'a>,
    pub candidate: Affine<'a>,
}

impl<'a> GruParams<'a> {
    pub fn from_flat(flat: &'a [f64], layout: &Layout) -> Self {
        GruParams {
            embed: Affine::from_block(flat, &layout.embed),
            start_token: &flat[layout.start_token.range()],
            update: Affine::from_block(flat, &layout.update),
            reset: Affine::from_block(flat, &layout.reset),
            candidate: Affine::from_block(flat, &layout.candidate),
        }
    }

    pub fn d_hist(&self) -> usize {
        self.update.out_dim()
    }
}

/// One GRU update driven by an already embedded input `e`.
fn cell(h_prev: &[f64], e: &[f64], p: &GruParams) -> Vec<f64> {
    let xh: Vec<f64> = e.iter().chain(h_prev).copied().collect();
    let u: Vec<f64> = p.update.apply(&xh).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = p.reset.apply(&xh).into_iter().map(sigmoid).collect();
    let xrh: Vec<f64> = e
        .iter()
        .copied()
        .chain(r.iter().zip(h_prev).map(|(r, h)| r * h))
        .collect();
    let cand = p.candidate.apply(&xrh);
    h_prev
        .iter()
        .zip(&u)
        .zip(cand)
        .map(|((h, u), c)| (1.0 - u) * h + u * c.tanh())
        .collect()
}

/// Advances the history by one observed event.
pub fn gru_step(h_prev: &HistoryState, event: EventInput, p: &GruParams) -> Result<HistoryState> {
    let raw = event.to_array();
    if raw.iter().chain(&h_prev.0).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite input to gru_step".into()));
    }
    if h_prev.0.len() != p.d_hist() {
        return Err(Error::DimensionMismatch(format!(
            "history has {} entries, cell expects {}",
            h_prev.0.len(),
            p.d_hist()
        )));
    }
    let e = p.embed.apply(&raw);
    Ok(HistoryState(cell(&h_prev.0, &e, p)))
}

/// State conditioning the first event: the zero state advanced once with
/// the learned start token used directly as the embedded input.
pub fn init_history(p: &GruParams) -> HistoryState {
    HistoryState(cell(&vec![0.0; p.d_hist()], p.start_token, p))
}
