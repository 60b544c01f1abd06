//! Scanpath domain types, dataset ingestion and preprocessing filters.
//!
//! Times are stored in seconds. A fixation's duration is its inter-event
//! time `tau = t_n - t_{n-1}` with `t_0 = 0` at trial onset; saccade flight
//! time is not modelled separately.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixation {
    /// Horizontal position in pixels.
    pub x: f64,
    /// Vertical position in pixels.
    pub y: f64,
    /// Arrival time in seconds from trial onset.
    pub t: f64,
    /// Inter-event time in seconds.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scanpath {
    pub stimulus_id: String,
    pub observer_id: String,
    pub fixations: Vec<Fixation>,
}

impl Scanpath {
    /// Builds a scanpath from `(x, y, t)` triples, deriving inter-event
    /// times from consecutive arrival times.
    ///
    /// Fails with [`Error::NonMonotoneTimestamps`] (line 0) unless arrival
    /// times are strictly increasing and positive.
    pub fn from_arrival_times(
        stimulus_id: impl Into<String>,
        observer_id: impl Into<String>,
        points: &[(f64, f64, f64)],
    ) -> Result<Self> {
        let fixations = fixations_from_times(points).map_err(|index| {
            Error::NonMonotoneTimestamps { line: 0, index }
        })?;
        Ok(Scanpath {
            stimulus_id: stimulus_id.into(),
            observer_id: observer_id.into(),
            fixations,
        })
    }

    /// Builds a scanpath from `(x, y, duration)` triples. Arrival times are
    /// the running sums of the durations.
    pub fn from_durations(
        stimulus_id: impl Into<String>,
        observer_id: impl Into<String>,
        points: &[(f64, f64, f64)],
    ) -> Result<Self> {
        let times = arrival_times(points.iter().map(|p| p.2));
        let pts: Vec<_> = points
            .iter()
            .zip(times)
            .map(|(&(x, y, _), t)| (x, y, t))
            .collect();
        Self::from_arrival_times(stimulus_id, observer_id, &pts)
    }

    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.fixations.iter().map(|f| (f.x, f.y))
    }

    pub fn durations(&self) -> impl Iterator<Item = f64> + '_ {
        self.fixations.iter().map(|f| f.tau)
    }
}

fn arrival_times(durations: impl Iterator<Item = f64>) -> Vec<f64> {
    durations
        .scan(0.0, |acc, d| {
            *acc += d;
            Some(*acc)
        })
        .collect()
}

/// Returns the index of the first offending fixation on failure.
fn fixations_from_times(points: &[(f64, f64, f64)]) -> std::result::Result<Vec<Fixation>, usize> {
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(points.len());
    for (i, &(x, y, t)) in points.iter().enumerate() {
        let tau = t - prev;
        if !(tau > 0.0) || !t.is_finite() {
            return Err(i);
        }
        out.push(Fixation { x, y, t, tau });
        prev = t;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub id: String,
    pub width: u32,
    pub height: u32,
    /// Trial length in seconds.
    pub viewing_duration: f64,
    pub feature_path: String,
}

impl Stimulus {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::InvalidStimulus {
            id: self.id.clone(),
            message: message.to_owned(),
        };
        if self.width == 0 || self.height == 0 {
            return Err(bad("width and height must be positive"));
        }
        if !(self.viewing_duration >= 0.0) || !self.viewing_duration.is_finite() {
            return Err(bad("viewing_duration must be a finite non-negative number"));
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanpathFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for ScanpathFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(ScanpathFormat::Jsonl),
            "csv" => Ok(ScanpathFormat::Csv),
            other => Err(Error::Config(format!("unknown scanpath format '{other}'"))),
        }
    }
}

impl ScanpathFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ScanpathFormat::Csv,
            _ => ScanpathFormat::Jsonl,
        }
    }
}

/// Settings of the preprocessing filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub min_fixations: usize,
    pub drop_first: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            min_fixations: 4,
            drop_first: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub stimuli: BTreeMap<String, Stimulus>,
    pub scanpaths: Vec<Scanpath>,
    pub split: Option<Split>,
    preprocessed: Option<PreprocessOptions>,
}

impl Dataset {
    /// Validates stimuli and scanpaths. Fixations falling outside the image
    /// frame are clamped onto it.
    pub fn new(stimuli: BTreeMap<String, Stimulus>, mut scanpaths: Vec<Scanpath>) -> Result<Self> {
        for s in stimuli.values() {
            s.validate()?;
        }
        for sp in &mut scanpaths {
            let stim = stimuli
                .get(&sp.stimulus_id)
                .ok_or_else(|| Error::UnresolvedStimulus(sp.stimulus_id.clone()))?;
            let (w, h) = (stim.width as f64, stim.height as f64);
            for f in &mut sp.fixations {
                if !(0.0..=w).contains(&f.x) || !(0.0..=h).contains(&f.y) {
                    log::warn!(
                        "{}/{}: fixation ({}, {}) outside {}x{} frame, clamped",
                        sp.stimulus_id,
                        sp.observer_id,
                        f.x,
                        f.y,
                        stim.width,
                        stim.height
                    );
                    f.x = f.x.clamp(0.0, w);
                    f.y = f.y.clamp(0.0, h);
                }
            }
        }
        Ok(Dataset {
            stimuli,
            scanpaths,
            split: None,
            preprocessed: None,
        })
    }

    /// Reads a stimulus manifest and a scanpath file.
    pub fn load(manifest: &Path, scanpaths: &Path, format: ScanpathFormat) -> Result<Self> {
        let stimuli = read_manifest(manifest)?;
        parse_scanpath_dataset(scanpaths, format, stimuli)
    }

    pub fn is_empty(&self) -> bool {
        self.scanpaths.is_empty()
    }

    pub fn len(&self) -> usize {
        self.scanpaths.len()
    }

    /// Options of the preprocessing already applied, if any.
    pub fn preprocessing(&self) -> Option<PreprocessOptions> {
        self.preprocessed
    }

    /// Scanpaths grouped by stimulus id, in stimulus-id order.
    pub fn by_stimulus(&self) -> BTreeMap<&str, Vec<&Scanpath>> {
        let mut groups: BTreeMap<&str, Vec<&Scanpath>> = BTreeMap::new();
        for sp in &self.scanpaths {
            groups.entry(sp.stimulus_id.as_str()).or_default().push(sp);
        }
        groups
    }

    fn with_scanpaths(&self, scanpaths: Vec<Scanpath>, split: Option<Split>) -> Dataset {
        Dataset {
            stimuli: self.stimuli.clone(),
            scanpaths,
            split,
            preprocessed: self.preprocessed,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
enum TimeUnit {
    #[default]
    #[serde(rename = "s")]
    Seconds,
    #[serde(rename = "ms")]
    Milliseconds,
}

impl TimeUnit {
    fn to_seconds(self, v: f64) -> f64 {
        match self {
            TimeUnit::Seconds => v,
            TimeUnit::Milliseconds => v / 1000.0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FixationRecord {
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScanpathRecord {
    stimulus_id: String,
    observer_id: String,
    #[serde(default)]
    unit: TimeUnit,
    fixations: Vec<FixationRecord>,
}

fn record_to_scanpath(rec: ScanpathRecord, line: usize) -> Result<Scanpath> {
    let unit = rec.unit;
    let has_t = rec.fixations.iter().all(|f| f.t.is_some());
    let has_d = rec.fixations.iter().all(|f| f.duration.is_some());
    let times: Vec<f64> = if has_t {
        rec.fixations
            .iter()
            .map(|f| unit.to_seconds(f.t.unwrap_or_default()))
            .collect()
    } else if has_d {
        arrival_times(
            rec.fixations
                .iter()
                .map(|f| unit.to_seconds(f.duration.unwrap_or_default())),
        )
    } else {
        return Err(Error::MalformedRecord {
            line,
            message: "every fixation needs either \"t\" or \"duration\"".into(),
        });
    };
    let pts: Vec<_> = rec
        .fixations
        .iter()
        .zip(times)
        .map(|(f, t)| (f.x, f.y, t))
        .collect();
    if let Some(i) = pts.iter().position(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::MalformedRecord {
            line,
            message: format!("fixation {i} has a non-finite position"),
        });
    }
    let fixations =
        fixations_from_times(&pts).map_err(|index| Error::NonMonotoneTimestamps { line, index })?;
    Ok(Scanpath {
        stimulus_id: rec.stimulus_id,
        observer_id: rec.observer_id,
        fixations,
    })
}

/// Parses scanpaths from a reader. Blank lines are skipped.
pub fn parse_scanpaths<R: Read>(reader: R, format: ScanpathFormat) -> Result<Vec<Scanpath>> {
    match format {
        ScanpathFormat::Jsonl => parse_jsonl(reader),
        ScanpathFormat::Csv => parse_csv(reader),
    }
}

fn parse_jsonl<R: Read>(reader: R) -> Result<Vec<Scanpath>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::MalformedRecord {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScanpathRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: lineno,
                message: e.to_string(),
            })?;
        out.push(record_to_scanpath(rec, lineno)?);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    stimulus_id: String,
    observer_id: String,
    x: f64,
    y: f64,
    #[serde(default)]
    t: Option<f64>,
    #[serde(default)]
    duration: Option<f64>,
    #[serde(default)]
    unit: Option<TimeUnit>,
}

/// CSV layout: header `stimulus_id,observer_id,x,y,t` (or `duration`
/// instead of `t`, plus an optional `unit` column). Consecutive rows with
/// the same `(stimulus_id, observer_id)` form one scanpath.
fn parse_csv<R: Read>(reader: R) -> Result<Vec<Scanpath>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    let mut current: Option<(ScanpathRecord, usize)> = None;
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let lineno = i + 2;
        let row = row.map_err(|e| Error::MalformedRecord {
            line: lineno,
            message: e.to_string(),
        })?;
        let same = matches!(&current, Some((rec, _))
            if rec.stimulus_id == row.stimulus_id && rec.observer_id == row.observer_id);
        if !same {
            if let Some((rec, start)) = current.take() {
                out.push(record_to_scanpath(rec, start)?);
            }
            current = Some((
                ScanpathRecord {
                    stimulus_id: row.stimulus_id.clone(),
                    observer_id: row.observer_id.clone(),
                    unit: row.unit.unwrap_or_default(),
                    fixations: Vec::new(),
                },
                lineno,
            ));
        }
        if let Some((rec, _)) = current.as_mut() {
            rec.fixations.push(FixationRecord {
                x: row.x,
                y: row.y,
                t: row.t,
                duration: row.duration,
            });
        }
    }
    if let Some((rec, start)) = current {
        out.push(record_to_scanpath(rec, start)?);
    }
    Ok(out)
}

pub fn read_scanpaths(path: &Path, format: ScanpathFormat) -> Result<Vec<Scanpath>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_scanpaths(file, format)
}

/// Parses a scanpath file and resolves every record against `stimuli`.
pub fn parse_scanpath_dataset(
    path: &Path,
    format: ScanpathFormat,
    stimuli: BTreeMap<String, Stimulus>,
) -> Result<Dataset> {
    let scanpaths = read_scanpaths(path, format)?;
    Dataset::new(stimuli, scanpaths)
}

/// Writes scanpaths as JSONL with times in seconds.
pub fn write_scanpaths_jsonl<W: Write>(mut writer: W, scanpaths: &[Scanpath]) -> std::io::Result<()> {
    for sp in scanpaths {
        let rec = ScanpathRecord {
            stimulus_id: sp.stimulus_id.clone(),
            observer_id: sp.observer_id.clone(),
            unit: TimeUnit::Seconds,
            fixations: sp
                .fixations
                .iter()
                .map(|f| FixationRecord {
                    x: f.x,
                    y: f.y,
                    t: Some(f.t),
                    duration: None,
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_scanpaths(path: &Path, scanpaths: &[Scanpath]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_scanpaths_jsonl(BufWriter::new(file), scanpaths).map_err(|e| Error::io(path, e))
}

pub fn parse_manifest<R: Read>(reader: R) -> Result<BTreeMap<String, Stimulus>> {
    let list: Vec<Stimulus> = serde_json::from_reader(reader).map_err(|e| Error::MalformedRecord {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut map = BTreeMap::new();
    for s in list {
        s.validate()?;
        if map.contains_key(&s.id) {
            return Err(Error::InvalidStimulus {
                id: s.id,
                message: "duplicate id".into(),
            });
        }
        map.insert(s.id.clone(), s);
    }
    Ok(map)
}

pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, Stimulus>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file))
}

pub fn write_manifest(path: &Path, stimuli: &BTreeMap<String, Stimulus>) -> Result<()> {
    let list: Vec<&Stimulus> = stimuli.values().collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &list)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Drops scanpaths shorter than `min_fixations`, then removes the first
/// fixation of each remaining scanpath when `drop_first` is set. The new
/// first fixation keeps its own inter-event time.
///
/// A dataset already preprocessed with the same options is returned
/// unchanged.
pub fn preprocess(d: &Dataset, opts: PreprocessOptions) -> Dataset {
    if d.preprocessed == Some(opts) {
        return d.clone();
    }
    let scanpaths = d
        .scanpaths
        .iter()
        .filter(|sp| sp.len() >= opts.min_fixations)
        .map(|sp| {
            let skip = usize::from(opts.drop_first);
            Scanpath {
                stimulus_id: sp.stimulus_id.clone(),
                observer_id: sp.observer_id.clone(),
                fixations: sp.fixations[skip..].to_vec(),
            }
        })
        .filter(|sp| !sp.is_empty())
        .collect();
    Dataset {
        stimuli: d.stimuli.clone(),
        scanpaths,
        split: d.split,
        preprocessed: Some(opts),
    }
}

/// Fractions of stimuli assigned to each split.
#[derive(Debug, Clone, Copy)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            val: 0.15,
        }
    }
}

/// Partitions a dataset into train/val/test by stimulus, so that no stimulus
/// appears in two splits. Stimuli are shuffled with `seed` first.
pub fn split_by_stimulus(d: &Dataset, fractions: SplitFractions, seed: u64) -> [Dataset; 3] {
    let mut ids: Vec<&String> = d.stimuli.keys().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = ((fractions.train * n as f64).round() as usize).min(n);
    let n_val = ((fractions.val * n as f64).round() as usize).min(n - n_train);
    let set = |r: std::ops::Range<usize>| -> BTreeSet<&str> {
        ids[r].iter().map(|s| s.as_str()).collect()
    };
    let parts = [
        (set(0..n_train), Split::Train),
        (set(n_train..n_train + n_val), Split::Val),
        (set(n_train + n_val..n), Split::Test),
    ];
    parts.map(|(ids, split)| {
        let sps = d
            .scanpaths
            .iter()
            .filter(|sp| ids.contains(sp.stimulus_id.as_str()))
            .cloned()
            .collect();
        d.with_scanpaths(sps, Some(split))
    })
}
