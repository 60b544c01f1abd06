use super::{align::needleman_wunsch, duration_repeats, expand};
use crate::data::{Scanpath, Stimulus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanMatchConfig {
    /// Bins along the longer image side.
    pub bins_long: usize,
    /// Bins along the shorter image side.
    pub bins_short: usize,
    /// Seconds per repeated symbol when durations are encoded.
    pub temporal_bin: f64,
    pub gap_penalty: f64,
}

impl Default for ScanMatchConfig {
    fn default() -> Self {
        ScanMatchConfig {
            bins_long: 14,
            bins_short: 8,
            temporal_bin: 0.050,
            gap_penalty: 0.0,
        }
    }
}

/// Spatial binning of one stimulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanMatchGrid {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
}

impl ScanMatchGrid {
    /// Bin id `row * nx + col` of a pixel position.
    pub fn bin(&self, x: f64, y: f64) -> usize {
        let col = ((x / self.width * self.nx as f64).floor().max(0.0) as usize).min(self.nx - 1);
        let row = ((y / self.height * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1);
        row * self.nx + col
    }

    /// Distance between two bin centres in bin units.
    pub fn distance(&self, p: usize, q: usize) -> f64 {
        let (pr, pc) = ((p / self.nx) as f64, (p % self.nx) as f64);
        let (qr, qc) = ((q / self.nx) as f64, (q % self.nx) as f64);
        (pr - qr).hypot(pc - qc)
    }

    pub fn diameter(&self) -> f64 {
        ((self.nx - 1) as f64).hypot((self.ny - 1) as f64)
    }
}

pub fn scanmatch_grid(stim: &Stimulus, cfg: &ScanMatchConfig) -> Result<ScanMatchGrid> {
    if cfg.bins_long == 0 || cfg.bins_short == 0 || !(cfg.temporal_bin > 0.0) {
        return Err(Error::Config("ScanMatch bins must be positive".into()));
    }
    let (nx, ny) = if stim.width >= stim.height {
        (cfg.bins_long, cfg.bins_short)
    } else {
        (cfg.bins_short, cfg.bins_long)
    };
    Ok(ScanMatchGrid {
        nx,
        ny,
        width: stim.width as f64,
        height: stim.height as f64,
    })
}

/// Symbol sequence of a scanpath, optionally with durations encoded by
/// repetition.
pub fn scanmatch_sequence(sp: &Scanpath, grid: &ScanMatchGrid, cfg: &ScanMatchConfig, with_duration: bool) -> Vec<usize> {
    let bins: Vec<usize> = sp.fixations.iter().map(|f| grid.bin(f.x, f.y)).collect();
    if with_duration {
        expand(&bins, sp.fixations.iter().map(|f| duration_repeats(f.tau, cfg.temporal_bin)))
    } else {
        bins
    }
}

/// Normalized Needleman–Wunsch score of two symbol sequences under the
/// distance-based substitution matrix of `grid`.
pub(crate) fn scanmatch_symbols(a: &[usize], b: &[usize], grid: &ScanMatchGrid, gap: f64) -> f64 {
    let d_max = grid.diameter();
    if d_max == 0.0 {
        return 1.0;
    }
    let score = needleman_wunsch(a.len(), b.len(), |i, j| d_max - grid.distance(a[i], b[j]), gap);
    score / (d_max * a.len().max(b.len()) as f64)
}

pub fn scanmatch(a: &Scanpath, b: &Scanpath, stim: &Stimulus, cfg: &ScanMatchConfig, with_duration: bool) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("scanmatch needs non-empty scanpaths".into()));
    }
    let grid = scanmatch_grid(stim, cfg)?;
    let sa = scanmatch_sequence(a, &grid, cfg, with_duration);
    let sb = scanmatch_sequence(b, &grid, cfg, with_duration);
    Ok(scanmatch_symbols(&sa, &sb, &grid, cfg.gap_penalty))
}
