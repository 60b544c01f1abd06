use super::{align::levenshtein, align::needleman_wunsch, duration_repeats, expand};
use crate::data::{Scanpath, Stimulus};
use crate::error::{Error, Result};

pub const DEFAULT_SED_GRID: usize = 5;

const MEAN_SHIFT_MAX_ITER: usize = 300;

/// Fixation cluster centres of one stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationClusters {
    pub centers: Vec<[f64; 2]>,
    pub bandwidth: f64,
}

impl FixationClusters {
    /// Index of the nearest centre; ties go to the lower index.
    pub fn nearest(&self, x: f64, y: f64) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = (c[0] - x).hypot(c[1] - y);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// Flat-kernel mean shift over all fixation positions of `human`. Modes
/// closer than half the bandwidth to an earlier mode are dropped.
pub fn build_clusters(human: &[&Scanpath], stim: &Stimulus, bandwidth: f64) -> Result<FixationClusters> {
    if !(bandwidth > 0.0) {
        return Err(Error::Config("cluster bandwidth must be positive".into()));
    }
    let pts: Vec<[f64; 2]> = human
        .iter()
        .flat_map(|sp| sp.fixations.iter().map(|f| [f.x, f.y]))
        .collect();
    if pts.is_empty() {
        return Err(Error::Empty(format!("no fixations to cluster on {}", stim.id)));
    }
    let tol = 1e-6 * bandwidth;
    let mut centers: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        let mut m = p;
        for _ in 0..MEAN_SHIFT_MAX_ITER {
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
            for q in &pts {
                if (q[0] - m[0]).hypot(q[1] - m[1]) <= bandwidth {
                    sx += q[0];
                    sy += q[1];
                    n += 1;
                }
            }
            let next = [sx / n as f64, sy / n as f64];
            let shift = (next[0] - m[0]).hypot(next[1] - m[1]);
            m = next;
            if shift < tol {
                break;
            }
        }
        if centers.iter().all(|c| (c[0] - m[0]).hypot(c[1] - m[1]) >= bandwidth / 2.0) {
            centers.push(m);
        }
    }
    let (w, h) = (stim.width as f64, stim.height as f64);
    for c in &mut centers {
        c[0] = c[0].clamp(0.0, w);
        c[1] = c[1].clamp(0.0, h);
    }
    Ok(FixationClusters { centers, bandwidth })
}

pub fn cluster_sequence(sp: &Scanpath, clusters: &FixationClusters, with_duration: bool, temporal_bin: f64) -> Vec<usize> {
    let ids: Vec<usize> = sp.fixations.iter().map(|f| clusters.nearest(f.x, f.y)).collect();
    if with_duration {
        expand(&ids, sp.fixations.iter().map(|f| duration_repeats(f.tau, temporal_bin)))
    } else {
        ids
    }
}

pub(crate) fn match_score<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    needleman_wunsch(a.len(), b.len(), |i, j| f64::from(u8::from(a[i] == b[j])), 0.0) / longest as f64
}

/// Alignment score of the cluster-id strings (match 1, mismatch 0, gap 0)
/// over the longer string length.
pub fn sequence_score(
    a: &Scanpath,
    b: &Scanpath,
    clusters: &FixationClusters,
    with_duration: bool,
    temporal_bin: f64,
) -> Result<f64> {
    if clusters.centers.is_empty() {
        return Err(Error::Empty("no fixation clusters".into()));
    }
    let sa = cluster_sequence(a, clusters, with_duration, temporal_bin);
    let sb = cluster_sequence(b, clusters, with_duration, temporal_bin);
    Ok(match_score(&sa, &sb))
}

/// Cell ids `row * n + col` on an `n × n` partition of the stimulus.
pub fn grid_symbols(sp: &Scanpath, stim: &Stimulus, n: usize) -> Vec<usize> {
    let cell = |v: f64, size: u32| ((v / size as f64 * n as f64).floor().max(0.0) as usize).min(n - 1);
    sp.fixations
        .iter()
        .map(|f| cell(f.y, stim.height) * n + cell(f.x, stim.width))
        .collect()
}

pub fn string_edit_distance(a: &Scanpath, b: &Scanpath, stim: &Stimulus, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::Config("SED grid size must be positive".into()));
    }
    Ok(levenshtein(&grid_symbols(a, stim, n), &grid_symbols(b, stim, n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stim() -> Stimulus {
        Stimulus {
            id: "s".into(),
            width: 1000,
            height: 1000,
            viewing_duration: 5.0,
            feature_path: "s.fvol".into(),
        }
    }

    fn sp(points: &[(f64, f64, f64)]) -> Scanpath {
        Scanpath::from_durations("s", "o", points).unwrap()
    }

    #[test]
    fn single_fixation_cluster() {
        let a = sp(&[(120.0, 340.0, 0.2)]);
        let c = build_clusters(&[&a], &stim(), 100.0).unwrap();
        assert_eq!(c.centers, vec![[120.0, 340.0]]);
        assert!(build_clusters(&[], &stim(), 100.0).is_err());
    }

    #[test]
    fn two_groups() {
        let a = sp(&[(100.0, 100.0, 0.2), (110.0, 104.0, 0.2), (600.0, 100.0, 0.2)]);
        let b = sp(&[(104.0, 96.0, 0.2), (590.0, 110.0, 0.2), (610.0, 90.0, 0.2)]);
        let c = build_clusters(&[&a, &b], &stim(), 100.0).unwrap();
        assert_eq!(c.centers.len(), 2);
        let near = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]) < 1e-9;
        assert!(near(c.centers[0], [314.0 / 3.0, 100.0]));
        assert!(near(c.centers[1], [600.0, 100.0]));
    }

    #[test]
    fn sequence_scores() {
        assert_eq!(match_score(&[1, 1, 2, 3], &[1, 2, 3]), 0.75);
        assert_eq!(match_score(&[1, 2], &[1, 2]), 1.0);
        assert_eq!(match_score(&[1, 2], &[3, 4]), 0.0);
    }

    #[test]
    fn sed_on_grid() {
        let a = sp(&[(10.0, 10.0, 0.2), (990.0, 10.0, 0.2)]);
        let b = sp(&[(10.0, 10.0, 0.2)]);
        assert_eq!(grid_symbols(&a, &stim(), 5), vec![0, 4]);
        assert_eq!(string_edit_distance(&a, &a, &stim(), 5).unwrap(), 0);
        assert_eq!(string_edit_distance(&a, &b, &stim(), 5).unwrap(), 1);
        let empty = Scanpath {
            fixations: vec![],
            ..b.clone()
        };
        assert_eq!(string_edit_distance(&empty, &a, &stim(), 5).unwrap(), 2);
    }
}
