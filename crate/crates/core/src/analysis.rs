//! Scanpath statistics: fixation-duration and saccade-amplitude
//! distributions, and return fixations.

use std::io::Write;

use crate::data::Scanpath;
use crate::error::{Error, Result};
use crate::eval::{bin_edges, histogram_counts};

pub const DEFAULT_RF_RADIUS: f64 = 50.0;

/// Density histogram: `density[i] * (edges[i+1] - edges[i])` sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    /// Samples that fell inside the range.
    pub count: usize,
}

impl Histogram {
    /// Density histogram of the samples within `[lo, hi]`.
    pub fn new(samples: &[f64], bins: usize, (lo, hi): (f64, f64)) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::Config("histogram needs bins > 0 and a non-empty range".into()));
        }
        let counts = histogram_counts(samples, lo, hi, bins);
        let count: usize = counts.iter().sum();
        if count == 0 {
            return Err(Error::Empty("no samples inside the histogram range".into()));
        }
        let width = (hi - lo) / bins as f64;
        Ok(Histogram {
            edges: bin_edges(lo, hi, bins),
            density: counts.iter().map(|&c| c as f64 / (count as f64 * width)).collect(),
            count,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_start,bin_end,density")?;
        for (i, d) in self.density.iter().enumerate() {
            writeln!(w, "{},{},{}", self.edges[i], self.edges[i + 1], d)?;
        }
        Ok(())
    }
}

pub fn duration_histogram(scanpaths: &[Scanpath], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let taus: Vec<f64> = scanpaths.iter().flat_map(|s| s.durations()).collect();
    if taus.is_empty() {
        return Err(Error::Empty("no fixation durations".into()));
    }
    Histogram::new(&taus, bins, range)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeUnit {
    Pixels,
    Degrees { pixels_per_degree: f64 },
}

/// Distances between consecutive fixations of each scanpath.
pub fn saccade_amplitudes(scanpaths: &[Scanpath], unit: AmplitudeUnit) -> Vec<f64> {
    let scale = match unit {
        AmplitudeUnit::Pixels => 1.0,
        AmplitudeUnit::Degrees { pixels_per_degree } => 1.0 / pixels_per_degree,
    };
    scanpaths
        .iter()
        .flat_map(|s| {
            s.fixations
                .windows(2)
                .map(move |w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y) * scale)
        })
        .collect()
}

pub fn amplitude_histogram(
    scanpaths: &[Scanpath],
    bins: usize,
    range: (f64, f64),
    unit: AmplitudeUnit,
) -> Result<Histogram> {
    let amps = saccade_amplitudes(scanpaths, unit);
    if amps.is_empty() {
        return Err(Error::Empty("no saccades".into()));
    }
    Histogram::new(&amps, bins, range)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReturnFixation {
    /// Index of the returning fixation.
    pub index: usize,
    /// Intervening fixations since the earliest revisited one.
    pub offset: usize,
}

/// Fixation `n` returns to the earliest fixation `k ≤ n - 2` within `radius`
/// pixels of it.
pub fn return_fixations(sp: &Scanpath, radius: f64) -> Vec<ReturnFixation> {
    let f = &sp.fixations;
    let mut out = Vec::new();
    for n in 2..f.len() {
        if let Some(k) = (0..n - 1).find(|&k| (f[n].x - f[k].x).hypot(f[n].y - f[k].y) <= radius) {
            out.push(ReturnFixation {
                index: n,
                offset: n - k - 1,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfDistribution {
    /// `counts[i]` returns with offset `i + 1`; the last entry also holds
    /// every larger offset.
    pub counts: Vec<usize>,
    /// `counts` normalized to sum to one (all zero without returns).
    pub frequencies: Vec<f64>,
    /// Mean number of returns per scanpath.
    pub rate: f64,
}

impl RfDistribution {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "offset,count,frequency")?;
        for (i, (c, f)) in self.counts.iter().zip(&self.frequencies).enumerate() {
            writeln!(w, "{},{},{}", i + 1, c, f)?;
        }
        Ok(())
    }
}

pub fn rf_distribution(scanpaths: &[Scanpath], radius: f64, max_offset: usize) -> Result<RfDistribution> {
    if max_offset == 0 {
        return Err(Error::Config("max_offset must be positive".into()));
    }
    let mut counts = vec![0usize; max_offset];
    let mut total = 0usize;
    for sp in scanpaths {
        for r in return_fixations(sp, radius) {
            counts[r.offset.min(max_offset) - 1] += 1;
            total += 1;
        }
    }
    let frequencies = counts
        .iter()
        .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
        .collect();
    let rate = if scanpaths.is_empty() {
        0.0
    } else {
        total as f64 / scanpaths.len() as f64
    };
    Ok(RfDistribution {
        counts,
        frequencies,
        rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(points: &[(f64, f64)]) -> Scanpath {
        let p: Vec<_> = points.iter().map(|&(x, y)| (x, y, 0.2)).collect();
        Scanpath::from_durations("s", "o", &p).unwrap()
    }

    #[test]
    fn aba_returns_once() {
        let r = return_fixations(&sp(&[(0.0, 0.0), (200.0, 0.0), (5.0, 5.0)]), 50.0);
        assert_eq!(r, vec![ReturnFixation { index: 2, offset: 1 }]);
        assert!(return_fixations(&sp(&[(0.0, 0.0), (1.0, 1.0)]), 50.0).is_empty());
    }

    #[test]
    fn earliest_match_wins() {
        let r = return_fixations(&sp(&[(0.0, 0.0), (10.0, 0.0), (300.0, 0.0), (300.0, 300.0), (5.0, 0.0)]), 20.0);
        assert_eq!(r, vec![ReturnFixation { index: 4, offset: 3 }]);
    }

    #[test]
    fn single_duration() {
        let mut s = sp(&[(0.0, 0.0)]);
        s.fixations[0].tau = 0.3;
        let h = duration_histogram(&[s], 10, (0.0, 1.0)).unwrap();
        assert_eq!(h.density.iter().filter(|d| **d > 0.0).count(), 1);
        assert!((h.density[3] * 0.1 - 1.0).abs() < 1e-12);
        assert!(duration_histogram(&[], 10, (0.0, 1.0)).is_err());
    }

    #[test]
    fn amplitudes() {
        let a = sp(&[(0.0, 0.0), (60.0, 80.0)]);
        assert_eq!(saccade_amplitudes(std::slice::from_ref(&a), AmplitudeUnit::Pixels), vec![100.0]);
        assert_eq!(
            saccade_amplitudes(&[a], AmplitudeUnit::Degrees { pixels_per_degree: 25.0 }),
            vec![4.0]
        );
        assert!(saccade_amplitudes(&[sp(&[(1.0, 1.0)])], AmplitudeUnit::Pixels).is_empty());
    }

    #[test]
    fn rf_without_returns() {
        let d = rf_distribution(&[sp(&[(0.0, 0.0), (100.0, 0.0), (200.0, 0.0)])], 10.0, 5).unwrap();
        assert_eq!(d.counts, vec![0; 5]);
        assert_eq!(d.frequencies, vec![0.0; 5]);
        assert_eq!(d.rate, 0.0);
    }

    #[test]
    fn rf_counts() {
        let a = sp(&[(0.0, 0.0), (100.0, 0.0), (0.0, 0.0), (100.0, 0.0)]);
        let d = rf_distribution(&[a.clone(), a], 10.0, 3).unwrap();
        assert_eq!(d.counts, vec![4, 0, 0]);
        assert_eq!(d.rate, 2.0);
    }
}
