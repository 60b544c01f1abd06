//! AdamW training with seeded mini-batching and early stopping on
//! validation NLL.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::loss_and_grad;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::TppModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 1e-1,
            batch_size: 128,
            patience: 20,
            max_epochs: 1000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(10.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr > 0.0) || !(self.eps > 0.0) {
            return bad("lr and eps must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimState {
    pub fn new(n: usize) -> Self {
        OptimState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One AdamW update in place. Decay applies only where `decay_mask` is set.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimState,
    cfg: &TrainConfig,
    decay_mask: &[bool],
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n || decay_mask.len() != n {
        return Err(Error::DimensionMismatch("optimizer vectors differ in length".into()));
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for i in 0..n {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        let decay = if decay_mask[i] { cfg.weight_decay * params[i] } else { 0.0 };
        params[i] -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + decay);
    }
    Ok(())
}

/// Rescales `g` so its Euclidean norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Event-weighted mean NLL of the mini-batches seen during the epoch.
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
    /// Loss or gradient turned non-finite during this epoch.
    Diverged { epoch: usize },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation NLL seen.
    pub model: TppModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop: StopReason,
}

/// Trains `model` on `train`, selecting by NLL on `val`. Without a
/// validation corpus the full training NLL after each epoch is used
/// instead.
///
/// Batches are evaluated on the current rayon pool; results do not depend
/// on its size.
pub fn train(model: TppModel, train: &Corpus, val: Option<&Corpus>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut order = train.all_indices();
    order.retain(|&i| !train.sequences[i].events.is_empty());
    if order.is_empty() {
        return Err(Error::Empty("training set has no events".into()));
    }
    let (select_on, select_idx) = match val {
        Some(v) if v.event_count(&v.all_indices()) > 0 => (v, v.all_indices()),
        _ => {
            log::warn!("no validation events; selecting on training NLL");
            (train, train.all_indices())
        }
    };
    let mask = model.layout().decay_mask();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimState::new(model.flat().len());
    let mut current = model;
    // stays the initial model if training diverges in the first epoch
    let mut best = current.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut events = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let step = loss_and_grad(&current, train, batch);
            let (loss, mut grad) = match step {
                Ok(r) => r,
                Err(e) if e.is_numerical() => {
                    stop = StopReason::Diverged { epoch };
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                stop = StopReason::Diverged { epoch };
                break 'epochs;
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grad, c);
            }
            adamw_step(current.flat_mut(), &grad, &mut state, cfg, &mask)?;
            let n = train.event_count(batch);
            sum += loss * n as f64;
            events += n;
        }
        let train_nll = sum / events as f64;
        let val_nll = match current.nll(select_on, &select_idx) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => {
                stop = StopReason::Diverged { epoch };
                break;
            }
            Err(e) if e.is_numerical() || matches!(e, Error::Domain(_)) => {
                stop = StopReason::Diverged { epoch };
                break;
            }
            Err(e) => return Err(e),
        };
        log::info!("epoch {epoch}: train {train_nll:.5} val {val_nll:.5}");
        history.push(EpochRecord {
            epoch,
            train_nll,
            val_nll,
        });
        if val_nll < best_val {
            best_val = val_nll;
            best_epoch = epoch;
            best = current.clone();
        }
        if epoch - best_epoch >= cfg.patience && epoch < cfg.max_epochs {
            stop = StopReason::Patience;
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
        stop,
    })
}

pub fn write_history<W: Write>(mut w: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(w, "epoch,train_nll,val_nll")?;
    for r in history {
        writeln!(w, "{},{},{}", r.epoch, r.train_nll, r.val_nll)?;
    }
    Ok(())
}

pub fn save_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_history(&mut w, history)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
