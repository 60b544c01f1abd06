use std::collections::BTreeMap;

use rayon::prelude::*;

use super::tape::{Tape, Var};
use crate::corpus::{Corpus, Event};
use crate::error::{Error, Result};
use crate::model::TppModel;
use crate::nn::LN_2PI;
use crate::params::{AffineBlock, Layout};
use crate::volume::FeatureVolume;

#[derive(Clone, Copy)]
struct AffineVars {
    w: Var,
    b: Var,
}

impl AffineVars {
    fn new(t: &mut Tape, a: &AffineBlock) -> Self {
        AffineVars {
            w: t.param(a.weight),
            b: t.param(a.bias),
        }
    }

    fn apply(self, t: &mut Tape, x: Var) -> Var {
        t.affine(self.w, self.b, x)
    }
}

/// Parameter leaves of every tensor, registered once per tape.
struct ParamVars {
    conv: [AffineVars; 3],
    proj: AffineVars,
    embed: AffineVars,
    start_token: Var,
    update: AffineVars,
    reset: AffineVars,
    candidate: AffineVars,
    head_w: AffineVars,
    head_s: AffineVars,
    head_m: AffineVars,
    head_omega: AffineVars,
    head_sigma: AffineVars,
    head_mu: AffineVars,
}

impl ParamVars {
    fn new(t: &mut Tape, l: &Layout) -> Self {
        let mut a = |b: &AffineBlock| AffineVars::new(t, b);
        let conv = [a(&l.conv[0]), a(&l.conv[1]), a(&l.conv[2])];
        let proj = a(&l.proj);
        let embed = a(&l.embed);
        let update = a(&l.update);
        let reset = a(&l.reset);
        let candidate = a(&l.candidate);
        let head_w = a(&l.head_w);
        let head_s = a(&l.head_s);
        let head_m = a(&l.head_m);
        let head_omega = a(&l.head_omega);
        let head_sigma = a(&l.head_sigma);
        let head_mu = a(&l.head_mu);
        ParamVars {
            conv,
            proj,
            embed,
            start_token: t.param(l.start_token),
            update,
            reset,
            candidate,
            head_w,
            head_s,
            head_m,
            head_omega,
            head_sigma,
            head_mu,
        }
    }
}

fn embedding(t: &mut Tape, p: &ParamVars, v: &FeatureVolume) -> Var {
    let cin = v.channels();
    let x = t.input(v.data().iter().map(|&f| f as f64).collect());
    let a = t.row_affine(p.conv[0].w, p.conv[0].b, x, cin);
    let a = t.softplus(a);
    let a = t.row_affine(p.conv[1].w, p.conv[1].b, a, crate::params::READOUT_WIDTHS[0]);
    let a = t.softplus(a);
    let map = t.row_affine(p.conv[2].w, p.conv[2].b, a, crate::params::READOUT_WIDTHS[1]);
    p.proj.apply(t, map)
}

/// Records the readout of a coordinate-augmented volume on `t`.
pub fn record_embedding(t: &mut Tape, layout: &Layout, v: &FeatureVolume) -> Var {
    let p = ParamVars::new(t, layout);
    embedding(t, &p, v)
}

fn cell(t: &mut Tape, p: &ParamVars, h: Var, e: Var) -> Var {
    let xh = t.concat(&[e, h]);
    let u = p.update.apply(t, xh);
    let u = t.sigmoid(u);
    let r = p.reset.apply(t, xh);
    let r = t.sigmoid(r);
    let rh = t.mul(r, h);
    let xrh = t.concat(&[e, rh]);
    let cand = p.candidate.apply(t, xrh);
    let cand = t.tanh(cand);
    let delta = t.sub(cand, h);
    let step = t.mul(u, delta);
    t.add(h, step)
}

fn lgmm_term(t: &mut Tape, p: &ParamVars, c: Var, tau: f64, k: usize) -> Var {
    let lt = tau.ln();
    let logw = p.head_w.apply(t, c);
    let logw = t.log_softmax(logw);
    let log_s = p.head_s.apply(t, c);
    let m = p.head_m.apply(t, c);
    let lt_v = t.input(vec![lt; k]);
    let diff = t.sub(lt_v, m);
    let neg_log_s = t.neg(log_s);
    let inv_s = t.exp(neg_log_s);
    let zs = t.mul(diff, inv_s);
    let quad = t.square(zs);
    let quad = t.scale(quad, -0.5);
    let a = t.sub(logw, log_s);
    let a = t.add(a, quad);
    let terms = t.offset(a, -lt - 0.5 * LN_2PI);
    t.log_sum_exp(terms)
}

fn gmm_term(t: &mut Tape, p: &ParamVars, c: Var, ev: &Event, g: usize) -> Var {
    let logw = p.head_omega.apply(t, c);
    let logw = t.log_softmax(logw);
    let logvar = p.head_sigma.apply(t, c);
    let mu = p.head_mu.apply(t, c);
    let r = t.input([ev.x, ev.y].repeat(g));
    let d = t.sub(r, mu);
    let d2 = t.square(d);
    let neg_logvar = t.neg(logvar);
    let inv_var = t.exp(neg_logvar);
    let q = t.mul(d2, inv_var);
    let q = t.group_sum(q, 2);
    let q = t.scale(q, -0.5);
    let ld = t.group_sum(logvar, 2);
    let ld = t.scale(ld, -0.5);
    let a = t.add(logw, ld);
    let a = t.add(a, q);
    let terms = t.offset(a, -LN_2PI);
    t.log_sum_exp(terms)
}

/// Per-event joint log-densities of one sequence, appended to `out`.
fn sequence(t: &mut Tape, p: &ParamVars, z: Var, events: &[Event], model: &TppModel, out: &mut Vec<Var>) {
    let cfg = model.config().tpp;
    let h0 = t.input(vec![0.0; cfg.d_hist]);
    let mut h = cell(t, p, h0, p.start_token);
    for (n, ev) in events.iter().enumerate() {
        let c = t.concat(&[h, z]);
        out.push(lgmm_term(t, p, c, ev.tau, cfg.k));
        out.push(gmm_term(t, p, c, ev, cfg.g));
        if n + 1 < events.len() {
            let raw = t.input(vec![ev.x, ev.y, ev.tau.ln()]);
            let e = p.embed.apply(t, raw);
            h = cell(t, p, h, e);
        }
    }
}

/// Records the summed log-likelihood of `indices` (all sharing whatever
/// stimuli they reference) and returns it with the event count.
fn record<'p>(model: &'p TppModel, corpus: &Corpus, indices: &[usize]) -> Result<(Tape<'p>, Var, usize)> {
    let mut t = Tape::new(model.flat());
    let p = ParamVars::new(&mut t, model.layout());
    let mut z: BTreeMap<usize, Var> = BTreeMap::new();
    let mut terms = Vec::new();
    let mut events = 0;
    for &i in indices {
        let seq = corpus
            .sequences
            .get(i)
            .ok_or_else(|| Error::DimensionMismatch(format!("batch index {i} out of range")))?;
        if seq.events.iter().any(|e| !(e.tau > 0.0)) {
            return Err(Error::Domain("inter-event time must be positive".into()));
        }
        let zv = match z.get(&seq.stimulus) {
            Some(v) => *v,
            None => {
                let v = embedding(&mut t, &p, &corpus.volumes[seq.stimulus]);
                z.insert(seq.stimulus, v);
                v
            }
        };
        sequence(&mut t, &p, zv, &seq.events, model, &mut terms);
        events += seq.events.len();
    }
    if events == 0 {
        return Err(Error::Empty("batch has no events".into()));
    }
    let all = t.concat(&terms);
    let total = t.sum(all);
    if let Some(node) = t.first_non_finite() {
        return Err(Error::NonFiniteNode { node });
    }
    Ok((t, total, events))
}

/// A recorded forward pass whose reverse sweep yields the gradient of the
/// mean per-event NLL.
pub struct RecordedNll<'p> {
    tape: Tape<'p>,
    loss: Var,
}

impl RecordedNll<'_> {
    pub fn loss(&self) -> f64 {
        self.tape.scalar(self.loss)
    }

    pub fn nodes(&self) -> usize {
        self.tape.len()
    }

    /// Gradient of the loss with respect to every model parameter. The
    /// recording is consumed.
    pub fn backward(self) -> Result<Vec<f64>> {
        self.tape.backward(self.loss)
    }
}

/// Mean per-event negative log-likelihood of `batch`, recorded for a
/// reverse sweep.
pub fn forward_nll<'p>(model: &'p TppModel, corpus: &Corpus, batch: &[usize]) -> Result<(f64, RecordedNll<'p>)> {
    let (mut t, total, events) = record(model, corpus, batch)?;
    let loss = t.scale(total, -1.0 / events as f64);
    let rec = RecordedNll { tape: t, loss };
    Ok((rec.loss(), rec))
}

/// Mean per-event NLL of `batch` and its gradient, evaluated stimulus by
/// stimulus in parallel on the current rayon pool. Group results are
/// reduced in stimulus order, so the output does not depend on the number
/// of worker threads.
pub fn loss_and_grad(model: &TppModel, corpus: &Corpus, batch: &[usize]) -> Result<(f64, Vec<f64>)> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in batch {
        let s = corpus
            .sequences
            .get(i)
            .ok_or_else(|| Error::DimensionMismatch(format!("batch index {i} out of range")))?
            .stimulus;
        groups.entry(s).or_default().push(i);
    }
    let events = corpus.event_count(batch);
    if events == 0 {
        return Err(Error::Empty("batch has no events".into()));
    }
    let scale = -1.0 / events as f64;
    let parts: Vec<Result<(f64, Vec<f64>)>> = groups
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|idx| {
            let (t, total, _) = record(model, corpus, idx)?;
            let value = t.scalar(total);
            let mut grad = vec![0.0; model.flat().len()];
            t.backward_into(total, scale, &mut grad)?;
            Ok((value, grad))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.flat().len()];
    for part in parts {
        let (v, g) = part?;
        loss += v;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EventSequence;
    use crate::params::{ModelConfig, ReadoutShape, TppConfig};
    use crate::volume::coordconv_augment;

    fn setup() -> (TppModel, Corpus) {
        let cfg = ModelConfig {
            tpp: TppConfig {
                d_img: 4,
                d_hist: 8,
                k: 2,
                g: 3,
                d_in: 5,
            },
            readout: ReadoutShape {
                height: 3,
                width: 3,
                channels: 2,
            },
        };
        let model = TppModel::init(cfg, 5).unwrap();
        let vol = |s: f32| {
            let data = (0..18).map(|i| ((i as f32) * s).sin()).collect();
            coordconv_augment(&FeatureVolume::new(3, 3, 2, data).unwrap())
        };
        let ev = |x, y, tau| Event { x, y, tau };
        let corpus = Corpus {
            stimulus_ids: vec!["a".into(), "b".into()],
            volumes: vec![vol(0.7), vol(1.3)],
            sequences: vec![
                EventSequence {
                    stimulus: 0,
                    events: vec![ev(0.2, 0.3, 0.25), ev(0.6, 0.5, 0.18), ev(0.7, 0.8, 0.4)],
                },
                EventSequence {
                    stimulus: 1,
                    events: vec![ev(0.5, 0.5, 0.3), ev(0.1, 0.9, 0.22)],
                },
                EventSequence {
                    stimulus: 0,
                    events: vec![ev(0.9, 0.1, 0.5)],
                },
            ],
        };
        (model, corpus)
    }

    #[test]
    fn tape_matches_direct_evaluation() {
        let (model, corpus) = setup();
        let all = corpus.all_indices();
        let (loss, _) = forward_nll(&model, &corpus, &all).unwrap();
        let direct = model.nll(&corpus, &all).unwrap();
        assert!((loss - direct).abs() < 1e-12 * direct.abs().max(1.0), "{loss} vs {direct}");
    }

    #[test]
    fn duplicated_batch_has_same_mean() {
        let (model, corpus) = setup();
        let (a, _) = forward_nll(&model, &corpus, &[0, 1]).unwrap();
        let (b, _) = forward_nll(&model, &corpus, &[0, 1, 0, 1]).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn grouped_gradient_equals_single_tape() {
        let (model, corpus) = setup();
        let all = corpus.all_indices();
        let (loss, rec) = forward_nll(&model, &corpus, &all).unwrap();
        let g1 = rec.backward().unwrap();
        let (loss2, g2) = loss_and_grad(&model, &corpus, &all).unwrap();
        assert!((loss - loss2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, corpus) = setup();
        let err = crate::autodiff::grad_check(&model, &corpus, &corpus.all_indices(), 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
