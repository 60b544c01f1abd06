//! Saliency maps built from fixations and the KL, AUC-Judd and NSS metrics.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Smoothing added to every pixel before the KL comparison.
pub const SALIENCY_EPS: f64 = 1e-10;
/// Gaussians are cut off beyond this many standard deviations.
pub const TRUNCATE_SIGMAS: f64 = 4.0;
pub const DEFAULT_SIGMA: f64 = 24.0;

/// Non-negative map summing to one, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    /// Normalizes `values` to unit sum.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::SizeMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("saliency values must be finite and non-negative".into()));
        }
        let total: f64 = values.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("saliency map has no mass".into()));
        }
        Ok(SaliencyMap {
            width,
            height,
            values: values.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Pixel index of a position, clamped into the frame.
    pub fn pixel(&self, x: f64, y: f64) -> usize {
        let c = (x.floor().max(0.0) as usize).min(self.width - 1);
        let r = (y.floor().max(0.0) as usize).min(self.height - 1);
        r * self.width + c
    }

    /// 8-bit grayscale PGM (P5) scaled so the maximum is white.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|v| {
            if max > 0.0 {
                (v / max * 255.0).round() as u8
            } else {
                0
            }
        }));
        out
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Sum of isotropic Gaussians of width `sigma` centred on each fixation,
/// evaluated at pixel centres and cut off at 4σ, normalized to unit sum.
pub fn saliency_from_fixations(fixations: &[(f64, f64)], shape: (usize, usize), sigma: f64) -> Result<SaliencyMap> {
    if fixations.is_empty() {
        return Err(Error::Empty("no fixations for the saliency map".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config("sigma must be positive".into()));
    }
    let (w, h) = shape;
    let mut values = vec![0.0; w * h];
    let reach = TRUNCATE_SIGMAS * sigma;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for &(fx, fy) in fixations {
        let c0 = ((fx - reach - 0.5).floor().max(0.0) as usize).min(w);
        let c1 = ((fx + reach - 0.5).ceil().max(-1.0) + 1.0).clamp(0.0, w as f64) as usize;
        let r0 = ((fy - reach - 0.5).floor().max(0.0) as usize).min(h);
        let r1 = ((fy + reach - 0.5).ceil().max(-1.0) + 1.0).clamp(0.0, h as f64) as usize;
        for r in r0..r1 {
            let dy = r as f64 + 0.5 - fy;
            for c in c0..c1 {
                let dx = c as f64 + 0.5 - fx;
                let d2 = dx * dx + dy * dy;
                if d2 <= reach * reach {
                    values[r * w + c] += (-d2 * inv).exp();
                }
            }
        }
    }
    SaliencyMap::new(w, h, values)
}

fn same_shape(a: &SaliencyMap, b: &SaliencyMap) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "maps {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

fn smooth(v: &[f64]) -> Vec<f64> {
    let z: f64 = v.iter().map(|x| x + SALIENCY_EPS).sum();
    v.iter().map(|x| (x + SALIENCY_EPS) / z).collect()
}

/// `Σ gt · ln(gt / pred)` after adding ε to every pixel of both maps and
/// renormalizing.
pub fn saliency_kl(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    same_shape(pred, gt)?;
    let (p, g) = (smooth(&pred.values), smooth(&gt.values));
    Ok(g.iter().zip(&p).map(|(g, p)| g * (g / p).ln()).sum::<f64>().max(0.0))
}

fn fixated_pixels(map: &SaliencyMap, fixations: &[(f64, f64)]) -> Vec<bool> {
    let mut fixated = vec![false; map.values.len()];
    for &(x, y) in fixations {
        fixated[map.pixel(x, y)] = true;
    }
    fixated
}

/// ROC area with fixated pixels as positives and every other pixel as a
/// negative, thresholding at the saliency values of the fixated pixels.
pub fn auc_judd(pred: &SaliencyMap, fixations: &[(f64, f64)]) -> Result<f64> {
    if fixations.is_empty() {
        return Err(Error::Empty("no fixations for AUC".into()));
    }
    let fixated = fixated_pixels(pred, fixations);
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (v, f) in pred.values.iter().zip(&fixated) {
        if *f {
            pos.push(*v);
        } else {
            neg.push(*v);
        }
    }
    if neg.is_empty() {
        return Err(Error::Domain("every pixel is fixated; AUC undefined".into()));
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    neg.sort_by(|a, b| b.total_cmp(a));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut thresholds = pos.clone();
    thresholds.dedup();
    let (mut area, mut prev) = (0.0, (0.0, 0.0));
    let (mut ip, mut ineg) = (0, 0);
    for t in thresholds {
        while ip < pos.len() && pos[ip] >= t {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] >= t {
            ineg += 1;
        }
        let pt = (ineg as f64 / nn, ip as f64 / np);
        area += (pt.0 - prev.0) * (pt.1 + prev.1) / 2.0;
        prev = pt;
    }
    area += (1.0 - prev.0) * (1.0 + prev.1) / 2.0;
    Ok(area)
}

/// Mean z-scored map value over fixations; zero for a constant map.
pub fn nss(pred: &SaliencyMap, fixations: &[(f64, f64)]) -> Result<f64> {
    if fixations.is_empty() {
        return Err(Error::Empty("no fixations for NSS".into()));
    }
    let n = pred.values.len() as f64;
    let mean = pred.values.iter().sum::<f64>() / n;
    let var = pred.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Ok(0.0);
    }
    let total: f64 = fixations
        .iter()
        .map(|&(x, y)| (pred.values[pred.pixel(x, y)] - mean) / std)
        .sum();
    Ok(total / fixations.len() as f64)
}
