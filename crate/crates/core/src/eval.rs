//! Score-distribution evaluation: human-vs-human scores (P) against
//! human-vs-model scores (Q) per metric, compared by histogram KL.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{Scanpath, Stimulus};
use crate::error::{Error, Result};
use crate::metrics::{
    build_clusters, multimatch, scanmatch, sequence_score, string_edit_distance, FixationClusters,
    MmConfig, MmScores, ScanMatchConfig, DEFAULT_SED_GRID,
};

/// Additive smoothing per histogram bin.
pub const KL_SMOOTHING: f64 = 1e-10;
pub const DEFAULT_KL_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistributionPair {
    pub metric_id: String,
    /// Human-vs-human scores.
    pub p_samples: Vec<f64>,
    /// Human-vs-simulated scores.
    pub q_samples: Vec<f64>,
}

/// Scores of every unordered human pair and every human-simulated pair
/// within each stimulus, pooled over stimuli. `metric` returns one value per
/// entry of `ids`.
pub fn pairwise_scores_multi<F>(
    real: &[Scanpath],
    sim: &[Scanpath],
    ids: &[&str],
    metric: F,
) -> Result<Vec<ScoreDistributionPair>>
where
    F: Fn(&Scanpath, &Scanpath) -> Result<Vec<f64>> + Sync,
{
    if sim.is_empty() {
        return Err(Error::Empty("no simulated scanpaths".into()));
    }
    let mut real_by: BTreeMap<&str, Vec<&Scanpath>> = BTreeMap::new();
    for sp in real {
        real_by.entry(&sp.stimulus_id).or_default().push(sp);
    }
    let mut sim_by: BTreeMap<&str, Vec<&Scanpath>> = BTreeMap::new();
    for sp in sim {
        sim_by.entry(&sp.stimulus_id).or_default().push(sp);
    }
    let mut p_pairs = Vec::new();
    let mut q_pairs = Vec::new();
    for (id, reals) in &real_by {
        if reals.len() < 2 {
            log::warn!("stimulus {id} has {} human scanpath(s); no human-human pairs", reals.len());
        }
        for i in 0..reals.len() {
            for j in i + 1..reals.len() {
                p_pairs.push((reals[i], reals[j]));
            }
        }
        for r in reals {
            for s in sim_by.get(id).into_iter().flatten() {
                q_pairs.push((*r, *s));
            }
        }
    }
    for id in sim_by.keys() {
        if !real_by.contains_key(id) {
            log::warn!("simulated scanpaths on {id} have no human counterpart");
        }
    }
    let run = |pairs: &[(&Scanpath, &Scanpath)]| -> Result<Vec<Vec<f64>>> {
        pairs.par_iter().map(|(a, b)| metric(a, b)).collect()
    };
    let p = run(&p_pairs)?;
    let q = run(&q_pairs)?;
    Ok(ids
        .iter()
        .enumerate()
        .map(|(k, id)| ScoreDistributionPair {
            metric_id: id.to_string(),
            p_samples: p.iter().map(|v| v[k]).collect(),
            q_samples: q.iter().map(|v| v[k]).collect(),
        })
        .collect())
}

pub fn pairwise_scores<F>(real: &[Scanpath], sim: &[Scanpath], metric_id: &str, metric: F) -> Result<ScoreDistributionPair>
where
    F: Fn(&Scanpath, &Scanpath) -> Result<f64> + Sync,
{
    let mut v = pairwise_scores_multi(real, sim, &[metric_id], |a, b| Ok(vec![metric(a, b)?]))?;
    Ok(v.remove(0))
}

/// `bins` equal-width bins spanning `[lo, hi]`.
pub fn bin_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins)
        .map(|i| if i == bins { hi } else { lo + (hi - lo) * i as f64 / bins as f64 })
        .collect()
}

/// Counts per bin; the last bin is closed on the right and values outside
/// `[lo, hi]` are ignored.
pub fn histogram_counts(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut c = vec![0; bins];
    for &x in samples {
        if !(x >= lo && x <= hi) {
            continue;
        }
        let i = if hi > lo {
            (((x - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        c[i] += 1;
    }
    c
}

fn smoothed(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    let raw: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64 + KL_SMOOTHING).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / z).collect()
}

/// Smoothed probability histograms of P and Q on shared edges over the
/// pooled sample range.
pub fn shared_histograms(pair: &ScoreDistributionPair, bins: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if pair.p_samples.is_empty() || pair.q_samples.is_empty() {
        return Err(Error::Empty(format!("{}: empty score sample", pair.metric_id)));
    }
    if bins == 0 {
        return Err(Error::Config("KL needs at least one bin".into()));
    }
    let all = pair.p_samples.iter().chain(&pair.q_samples);
    if all.clone().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{}: non-finite score", pair.metric_id)));
    }
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let p = smoothed(&histogram_counts(&pair.p_samples, lo, hi, bins));
    let q = smoothed(&histogram_counts(&pair.q_samples, lo, hi, bins));
    Ok((bin_edges(lo, hi, bins), p, q))
}

/// `D_KL(P ‖ Q)` in nats between the smoothed histograms.
pub fn kl_divergence(pair: &ScoreDistributionPair, bins: usize) -> Result<f64> {
    let (_, p, q) = shared_histograms(pair, bins)?;
    Ok(p.iter().zip(&q).map(|(p, q)| p * (p / q).ln()).sum::<f64>().max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    MultiMatch,
    ScanMatch,
    SequenceScore,
    Sed,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::MultiMatch,
        MetricKind::ScanMatch,
        MetricKind::SequenceScore,
        MetricKind::Sed,
    ];

    pub fn id(self) -> &'static str {
        match self {
            MetricKind::MultiMatch => "mm",
            MetricKind::ScanMatch => "sm",
            MetricKind::SequenceScore => "ss",
            MetricKind::Sed => "sed",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?} (expected mm, sm, ss or sed)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub metrics: Vec<MetricKind>,
    pub multimatch: MmConfig,
    pub scanmatch: ScanMatchConfig,
    /// Sequence Score cluster bandwidth as a fraction of the image diagonal.
    pub cluster_bandwidth: f64,
    pub sed_grid: usize,
    pub kl_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            metrics: MetricKind::ALL.to_vec(),
            multimatch: MmConfig::default(),
            scanmatch: ScanMatchConfig::default(),
            cluster_bandwidth: 0.1,
            sed_grid: DEFAULT_SED_GRID,
            kl_bins: DEFAULT_KL_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub metric: String,
    pub variant: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Score samples behind every KL row.
    pub distributions: Vec<ScoreDistributionPair>,
}

impl Report {
    pub fn value(&self, metric: &str, variant: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.variant == variant)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "metric,variant,value")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.metric, r.variant, r.value)?;
        }
        Ok(())
    }

    pub fn pretty(&self) -> String {
        let mut s = format!("{:<8} {:<18} {:>14}\n", "metric", "variant", "value");
        for r in &self.rows {
            s.push_str(&format!("{:<8} {:<18} {:>14.6}\n", r.metric, r.variant, r.value));
        }
        s
    }
}

const WITH_DUR: &str = "with_duration";
const WITHOUT_DUR: &str = "without_duration";

fn stimulus<'a>(stimuli: &'a BTreeMap<String, Stimulus>, sp: &Scanpath) -> Result<&'a Stimulus> {
    stimuli
        .get(&sp.stimulus_id)
        .ok_or_else(|| Error::UnresolvedStimulus(sp.stimulus_id.clone()))
}

fn at_least(sps: &[Scanpath], n: usize, what: &str) -> Vec<Scanpath> {
    let kept: Vec<Scanpath> = sps.iter().filter(|s| s.len() >= n).cloned().collect();
    if kept.len() < sps.len() {
        log::warn!("{what}: {} scanpath(s) shorter than {n} fixations skipped", sps.len() - kept.len());
    }
    kept
}

/// KL of each metric's score distributions (raw mean for SED) between
/// `real` and `sim`.
pub fn evaluate(
    stimuli: &BTreeMap<String, Stimulus>,
    real: &[Scanpath],
    sim: &[Scanpath],
    cfg: &EvalConfig,
) -> Result<Report> {
    let mut report = Report::default();
    if cfg.metrics.is_empty() {
        return Ok(report);
    }
    if sim.is_empty() {
        return Err(Error::Empty("no simulated scanpaths".into()));
    }
    for sp in real.iter().chain(sim) {
        stimulus(stimuli, sp)?;
    }
    let push_kl = |report: &mut Report, metric: &str, variant: &str, pair: ScoreDistributionPair| -> Result<f64> {
        let kl = kl_divergence(&pair, cfg.kl_bins)?;
        report.rows.push(ReportRow {
            metric: metric.into(),
            variant: variant.into(),
            value: kl,
        });
        report.distributions.push(pair);
        Ok(kl)
    };
    let mut metrics = cfg.metrics.clone();
    metrics.sort();
    metrics.dedup();
    for m in metrics {
        match m {
            MetricKind::MultiMatch => {
                let (r, s) = (at_least(real, 2, "mm"), at_least(sim, 2, "mm"));
                let ids: Vec<String> = MmScores::NAMES.iter().map(|n| format!("mm-{n}")).collect();
                let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
                let pairs = pairwise_scores_multi(&r, &s, &id_refs, |a, b| {
                    let st = stimulus(stimuli, a)?;
                    let screen = (st.width as f64, st.height as f64);
                    Ok(multimatch(a, b, screen, &cfg.multimatch)?.to_array().to_vec())
                })?;
                let mut sum = 0.0;
                for (name, pair) in MmScores::NAMES.iter().zip(pairs) {
                    sum += push_kl(&mut report, "mm", name, pair)?;
                }
                report.rows.push(ReportRow {
                    metric: "mm".into(),
                    variant: "avg".into(),
                    value: sum / MmScores::NAMES.len() as f64,
                });
            }
            MetricKind::ScanMatch => {
                let (r, s) = (at_least(real, 1, "sm"), at_least(sim, 1, "sm"));
                for (variant, dur) in [(WITH_DUR, true), (WITHOUT_DUR, false)] {
                    let pair = pairwise_scores(&r, &s, &format!("sm-{variant}"), |a, b| {
                        scanmatch(a, b, stimulus(stimuli, a)?, &cfg.scanmatch, dur)
                    })?;
                    push_kl(&mut report, "sm", variant, pair)?;
                }
            }
            MetricKind::SequenceScore => {
                let (r, s) = (at_least(real, 1, "ss"), at_least(sim, 1, "ss"));
                let mut clusters: BTreeMap<&str, FixationClusters> = BTreeMap::new();
                let mut by: BTreeMap<&str, Vec<&Scanpath>> = BTreeMap::new();
                for sp in &r {
                    by.entry(&sp.stimulus_id).or_default().push(sp);
                }
                for (id, sps) in by {
                    let st = &stimuli[id];
                    clusters.insert(id, build_clusters(&sps, st, cfg.cluster_bandwidth * st.diagonal())?);
                }
                let bin = cfg.scanmatch.temporal_bin;
                for (variant, dur) in [(WITH_DUR, true), (WITHOUT_DUR, false)] {
                    let pair = pairwise_scores(&r, &s, &format!("ss-{variant}"), |a, b| {
                        sequence_score(a, b, &clusters[a.stimulus_id.as_str()], dur, bin)
                    })?;
                    push_kl(&mut report, "ss", variant, pair)?;
                }
            }
            MetricKind::Sed => {
                let pair = pairwise_scores(real, sim, "sed", |a, b| {
                    Ok(string_edit_distance(a, b, stimulus(stimuli, a)?, cfg.sed_grid)? as f64)
                })?;
                if pair.q_samples.is_empty() {
                    return Err(Error::Empty("no human-simulated pairs for sed".into()));
                }
                let mean = pair.q_samples.iter().sum::<f64>() / pair.q_samples.len() as f64;
                report.rows.push(ReportRow {
                    metric: "sed".into(),
                    variant: "mean".into(),
                    value: mean,
                });
            }
        }
    }
    Ok(report)
}

/// Moves every scanpath to another stimulus (each id maps to the next one
/// in sorted order), breaking any image-specific correspondence.
pub fn shuffle_stimuli(sps: &[Scanpath]) -> Vec<Scanpath> {
    let mut ids: Vec<&str> = sps.iter().map(|s| s.stimulus_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let next: BTreeMap<&str, &str> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, ids[(i + 1) % ids.len()]))
        .collect();
    sps.iter()
        .map(|s| Scanpath {
            stimulus_id: next[s.stimulus_id.as_str()].to_owned(),
            ..s.clone()
        })
        .collect()
}
