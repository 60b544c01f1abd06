//! Synthetic stimuli and human-like scanpaths for tests, demos and the
//! bundled toy dataset. Each stimulus has a feature volume with a Gaussian
//! "object" channel planted at a known location, and observers fixate
//! mostly near that object.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::data::{save_scanpaths, write_manifest, Fixation, Scanpath, Stimulus};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::volume::{write_feature_volume, FeatureVolume};

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub n_stimuli: usize,
    pub n_observers: usize,
    pub width: u32,
    pub height: u32,
    /// Feature grid rows and columns.
    pub grid: (usize, usize),
    pub channels: usize,
    pub viewing_duration: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            n_stimuli: 4,
            n_observers: 10,
            width: 320,
            height: 240,
            grid: (6, 8),
            channels: 4,
            viewing_duration: 3.0,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyData {
    pub stimuli: BTreeMap<String, Stimulus>,
    /// Raw feature volumes keyed by stimulus id.
    pub volumes: BTreeMap<String, FeatureVolume>,
    pub scanpaths: Vec<Scanpath>,
    /// Planted object centre per stimulus, normalized to `[0, 1]²`.
    pub objects: BTreeMap<String, [f64; 2]>,
}

const BLOB_SIGMA: f64 = 0.15;

/// Feature volume whose channel 0 is a Gaussian bump centred on `object`
/// (normalized coordinates) and whose other channels are seeded noise.
pub fn toy_feature_volume(rows: usize, cols: usize, channels: usize, object: [f64; 2], seed: u64) -> Result<FeatureVolume> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let mut data = Vec::with_capacity(rows * cols * channels);
    for r in 0..rows {
        for c in 0..cols {
            let x = (c as f64 + 0.5) / cols as f64;
            let y = (r as f64 + 0.5) / rows as f64;
            let d2 = (x - object[0]).powi(2) + (y - object[1]).powi(2);
            data.push((-d2 / (2.0 * BLOB_SIGMA * BLOB_SIGMA)).exp() as f32);
            for _ in 1..channels {
                data.push(noise.sample(&mut rng) as f32);
            }
        }
    }
    FeatureVolume::new(rows, cols, channels, data)
}

fn object_location(i: usize, rng: &mut ChaCha8Rng) -> [f64; 2] {
    const ANCHORS: [[f64; 2]; 4] = [[0.25, 0.3], [0.75, 0.7], [0.75, 0.3], [0.25, 0.7]];
    let base = if i < ANCHORS.len() {
        ANCHORS[i]
    } else {
        [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)]
    };
    [
        base[0] + rng.random_range(-0.05..0.05),
        base[1] + rng.random_range(-0.05..0.05),
    ]
}

/// One human-like scanpath: a central first fixation, then fixations
/// mostly near the object, sometimes near a secondary spot, occasionally
/// anywhere, until the viewing time is used up.
fn toy_scanpath(stim: &Stimulus, object: [f64; 2], secondary: [f64; 2], observer: usize, rng: &mut ChaCha8Rng) -> Scanpath {
    let durations = LogNormal::new(0.25f64.ln(), 0.35).expect("valid log-normal");
    let spread = Normal::new(0.0, 0.06).expect("valid normal");
    let (w, h) = (stim.width as f64, stim.height as f64);
    let mut fixations = Vec::new();
    let mut t = 0.0;
    while t < stim.viewing_duration && fixations.len() < 40 {
        let [x, y] = if fixations.is_empty() {
            [0.5, 0.5]
        } else {
            let u: f64 = rng.random();
            let centre = if u < 0.65 {
                object
            } else if u < 0.9 {
                secondary
            } else {
                [rng.random(), rng.random()]
            };
            [centre[0] + spread.sample(rng), centre[1] + spread.sample(rng)]
        };
        let tau = durations.sample(rng).max(0.05);
        t += tau;
        fixations.push(Fixation {
            x: (x * w).clamp(0.0, w),
            y: (y * h).clamp(0.0, h),
            t,
            tau,
        });
    }
    Scanpath {
        stimulus_id: stim.id.clone(),
        observer_id: format!("obs{observer:02}"),
        fixations,
    }
}

pub fn toy_dataset(spec: &ToySpec) -> Result<ToyData> {
    if spec.n_stimuli == 0 || spec.channels == 0 || spec.grid.0 == 0 || spec.grid.1 == 0 {
        return Err(Error::Config("toy dataset dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = ToyData {
        stimuli: BTreeMap::new(),
        volumes: BTreeMap::new(),
        scanpaths: Vec::new(),
        objects: BTreeMap::new(),
    };
    for i in 0..spec.n_stimuli {
        let id = format!("toy{i:02}");
        let object = object_location(i, &mut rng);
        let secondary = [1.0 - object[0], object[1] + rng.random_range(-0.1..0.1)];
        let stim = Stimulus {
            id: id.clone(),
            width: spec.width,
            height: spec.height,
            viewing_duration: spec.viewing_duration,
            feature_path: format!("{id}.fvol"),
        };
        let vol = toy_feature_volume(spec.grid.0, spec.grid.1, spec.channels, object, derive_seed(spec.seed, &id, 0))?;
        for o in 0..spec.n_observers {
            let mut orng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &id, 1 + o as u64));
            data.scanpaths.push(toy_scanpath(&stim, object, secondary, o, &mut orng));
        }
        data.volumes.insert(id.clone(), vol);
        data.objects.insert(id.clone(), object);
        data.stimuli.insert(id, stim);
    }
    Ok(data)
}

/// Writes `manifest.json`, `scanpaths.jsonl` and `features/*.fvol` under
/// `dir`.
pub fn write_toy_dataset(dir: &Path, data: &ToyData) -> Result<()> {
    let features = dir.join("features");
    fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
    write_manifest(&dir.join("manifest.json"), &data.stimuli)?;
    save_scanpaths(&dir.join("scanpaths.jsonl"), &data.scanpaths)?;
    for (id, v) in &data.volumes {
        write_feature_volume(&features.join(&data.stimuli[id].feature_path), v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_shaped() {
        let spec = ToySpec::default();
        let a = toy_dataset(&spec).unwrap();
        let b = toy_dataset(&spec).unwrap();
        assert_eq!(a.scanpaths, b.scanpaths);
        assert_eq!(a.volumes, b.volumes);
        assert_eq!(a.stimuli.len(), 4);
        assert_eq!(a.scanpaths.len(), 40);
        let v = &a.volumes["toy00"];
        assert_eq!((v.height(), v.width(), v.channels()), (6, 8, 4));
    }

    #[test]
    fn blob_peaks_at_object() {
        let object = [0.32, 0.61];
        let v = toy_feature_volume(10, 10, 2, object, 1).unwrap();
        let mut best = (0, 0, f32::MIN);
        for r in 0..10 {
            for c in 0..10 {
                if v.at(r, c, 0) > best.2 {
                    best = (r, c, v.at(r, c, 0));
                }
            }
        }
        assert_eq!((best.0, best.1), (6, 3));
    }
}
