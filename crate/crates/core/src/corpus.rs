//! Model-ready view of a dataset: normalized event sequences indexed to
//! coordinate-augmented feature volumes.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{Dataset, Scanpath, Stimulus};
use crate::error::{Error, Result};
use crate::volume::{coordconv_augment, load_feature_volume, FeatureVolume};

/// One event as the model sees it: position normalized to `[0, 1]²` by the
/// stimulus size and the inter-event time in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    /// Index into [`Corpus::volumes`].
    pub stimulus: usize,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub stimulus_ids: Vec<String>,
    /// Coordinate-augmented volumes, one per stimulus.
    pub volumes: Vec<FeatureVolume>,
    pub sequences: Vec<EventSequence>,
}

pub fn normalize_scanpath(sp: &Scanpath, stim: &Stimulus) -> Vec<Event> {
    let (w, h) = (stim.width as f64, stim.height as f64);
    sp.fixations
        .iter()
        .map(|f| Event {
            x: f.x / w,
            y: f.y / h,
            tau: f.tau,
        })
        .collect()
}

impl Corpus {
    /// Builds a corpus from raw (not yet augmented) volumes keyed by
    /// stimulus id. Stimuli without scanpaths are kept so they can still be
    /// sampled from.
    pub fn from_dataset(d: &Dataset, raw_volumes: &BTreeMap<String, FeatureVolume>) -> Result<Self> {
        let mut stimulus_ids = Vec::new();
        let mut volumes = Vec::new();
        let mut index = BTreeMap::new();
        for id in d.stimuli.keys() {
            let v = raw_volumes
                .get(id)
                .ok_or_else(|| Error::UnresolvedStimulus(format!("{id} (no feature volume)")))?;
            index.insert(id.as_str(), stimulus_ids.len());
            stimulus_ids.push(id.clone());
            volumes.push(coordconv_augment(v));
        }
        let sequences = d
            .scanpaths
            .iter()
            .filter(|sp| !sp.is_empty())
            .map(|sp| {
                let stim = &d.stimuli[&sp.stimulus_id];
                EventSequence {
                    stimulus: index[sp.stimulus_id.as_str()],
                    events: normalize_scanpath(sp, stim),
                }
            })
            .collect();
        Ok(Corpus {
            stimulus_ids,
            volumes,
            sequences,
        })
    }

    pub fn event_count(&self, batch: &[usize]) -> usize {
        batch.iter().map(|&i| self.sequences[i].events.len()).sum()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.sequences.len()).collect()
    }
}

/// Loads the feature volume of every stimulus, resolving `feature_path`
/// relative to `features_dir`.
pub fn load_volumes(
    stimuli: &BTreeMap<String, Stimulus>,
    features_dir: &Path,
) -> Result<BTreeMap<String, FeatureVolume>> {
    stimuli
        .values()
        .map(|s| Ok((s.id.clone(), load_feature_volume(&features_dir.join(&s.feature_path))?)))
        .collect()
}
