//! Autoregressive scanpath generation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Fixation, Scanpath, Stimulus};
use crate::error::{Error, Result};
use crate::model::TppModel;
use crate::readout::SemanticEmbedding;
use crate::seed::derive_seed;
use crate::tpp::{
    gmm_params, gmm_sample, gru_step, init_history, lgmm_params, lgmm_sample, make_context, Bounds,
    EventInput,
};
use crate::volume::{coordconv_augment, FeatureVolume};

pub const DEFAULT_MAX_FIXATIONS: usize = 50;

/// Slack below which the remaining viewing time counts as used up, so that
/// durations summing to the horizon up to rounding do not add an event.
const HORIZON_SLACK: f64 = 1e-9;

/// Generates one scanpath on `stim`. Events are drawn until the arrival
/// time reaches the viewing duration or `max_fixations` events exist; the
/// last event may end past the horizon.
pub fn sample_scanpath<R: Rng + ?Sized>(
    model: &TppModel,
    z: &SemanticEmbedding,
    stim: &Stimulus,
    observer_id: &str,
    rng: &mut R,
    max_fixations: usize,
) -> Result<Scanpath> {
    let gru = model.gru_params();
    let heads = model.head_params();
    let (w, h_px) = (stim.width as f64, stim.height as f64);
    let mut h = init_history(&gru);
    let mut t = 0.0;
    let mut fixations = Vec::new();
    while t < stim.viewing_duration - HORIZON_SLACK && fixations.len() < max_fixations {
        let c = make_context(&h, z);
        if c.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite context while sampling".into()));
        }
        let tau = lgmm_sample(&lgmm_params(&c, &heads), rng);
        let [x, y] = gmm_sample(&gmm_params(&c, &heads), Bounds::UNIT, rng);
        if !tau.is_finite() || !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite sample (tau {tau}, x {x}, y {y}) after {} events",
                fixations.len()
            )));
        }
        t += tau;
        fixations.push(Fixation {
            x: x * w,
            y: y * h_px,
            t,
            tau,
        });
        h = gru_step(&h, EventInput::new(x, y, tau), &gru)?;
    }
    Ok(Scanpath {
        stimulus_id: stim.id.clone(),
        observer_id: observer_id.to_owned(),
        fixations,
    })
}

/// `n_per_stimulus` scanpaths for every stimulus with a volume, ordered by
/// stimulus id then replicate. Each scanpath draws from its own generator
/// seeded by `(seed, stimulus id, replicate)`, so the output does not depend
/// on evaluation order or thread count.
pub fn sample_ensemble(
    model: &TppModel,
    stimuli: &BTreeMap<String, Stimulus>,
    raw_volumes: &BTreeMap<String, FeatureVolume>,
    n_per_stimulus: usize,
    seed: u64,
    max_fixations: usize,
) -> Result<Vec<Scanpath>> {
    if n_per_stimulus == 0 {
        return Ok(Vec::new());
    }
    let mut tasks = Vec::new();
    for stim in stimuli.values() {
        let v = raw_volumes
            .get(&stim.id)
            .ok_or_else(|| Error::UnresolvedStimulus(format!("{} (no feature volume)", stim.id)))?;
        let z = model.embed(&coordconv_augment(v))?;
        tasks.push((stim, z));
    }
    let jobs: Vec<(usize, usize)> = (0..tasks.len())
        .flat_map(|s| (0..n_per_stimulus).map(move |r| (s, r)))
        .collect();
    jobs.par_iter()
        .map(|&(s, r)| {
            let (stim, z) = &tasks[s];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &stim.id, r as u64));
            sample_scanpath(model, z, stim, &format!("sim:{r}"), &mut rng, max_fixations)
        })
        .collect()
}
