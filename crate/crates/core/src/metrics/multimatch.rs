use std::f64::consts::PI;

use crate::data::Scanpath;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmScores {
    pub shape: f64,
    pub length: f64,
    pub direction: f64,
    pub position: f64,
    pub duration: f64,
}

impl MmScores {
    pub const NAMES: [&'static str; 5] = ["shape", "length", "direction", "position", "duration"];

    pub fn to_array(self) -> [f64; 5] {
        [self.shape, self.length, self.direction, self.position, self.duration]
    }
}

/// Simplification thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmConfig {
    pub direction_deg: f64,
    /// Amplitude threshold as a fraction of the screen diagonal.
    pub amplitude_fraction: f64,
    /// Duration threshold as a fraction of the longest fixation.
    pub duration_fraction: f64,
    pub simplify: bool,
}

impl Default for MmConfig {
    fn default() -> Self {
        MmConfig {
            direction_deg: 45.0,
            amplitude_fraction: 0.1,
            duration_fraction: 0.3,
            simplify: true,
        }
    }
}

/// A saccade with the position and duration of the fixation it leaves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saccade {
    pub start: [f64; 2],
    pub vector: [f64; 2],
    pub duration: f64,
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Unsigned angle in `[0, π]`; zero when either vector vanishes.
fn angle(u: [f64; 2], v: [f64; 2]) -> f64 {
    let cross = u[0] * v[1] - u[1] * v[0];
    let dot = u[0] * v[0] + u[1] * v[1];
    cross.abs().atan2(dot)
}

/// `(x, y, duration)` fixations to saccades.
pub fn saccades(fix: &[(f64, f64, f64)]) -> Vec<Saccade> {
    fix.windows(2)
        .map(|w| Saccade {
            start: [w[0].0, w[0].1],
            vector: [w[1].0 - w[0].0, w[1].1 - w[0].1],
            duration: w[0].2,
        })
        .collect()
}

/// Removes intermediate fixations shorter than the duration threshold when
/// the saccades around them are nearly collinear or both short, merging the
/// two saccades. The removed duration is credited to the landing fixation.
/// Repeats until nothing changes.
pub fn simplify(fix: &[(f64, f64, f64)], diag: f64, cfg: &MmConfig) -> Vec<(f64, f64, f64)> {
    let mut f = fix.to_vec();
    let max_dur = f.iter().map(|p| p.2).fold(0.0, f64::max);
    let t_dur = cfg.duration_fraction * max_dur;
    let t_amp = cfg.amplitude_fraction * diag;
    let t_dir = cfg.direction_deg.to_radians();
    loop {
        let mut changed = false;
        let mut k = 1;
        while k + 1 < f.len() {
            let u = [f[k].0 - f[k - 1].0, f[k].1 - f[k - 1].1];
            let v = [f[k + 1].0 - f[k].0, f[k + 1].1 - f[k].1];
            let mergeable = angle(u, v) < t_dir || (norm(u) < t_amp && norm(v) < t_amp);
            if f[k].2 < t_dur && mergeable {
                let d = f[k].2;
                f.remove(k);
                f[k].2 += d;
                changed = true;
            } else {
                k += 1;
            }
        }
        if !changed {
            return f;
        }
    }
}

/// Cheapest monotone path through the saccade-difference lattice from the
/// first pair to the last, as the list of aligned index pairs.
pub fn align_saccades(a: &[Saccade], b: &[Saccade]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| {
        norm([a[i].vector[0] - b[j].vector[0], a[i].vector[1] - b[j].vector[1]])
    };
    let mut acc = vec![vec![0.0f64; m]; n];
    for i in 0..n {
        for j in 0..m {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[0][j - 1],
                (_, 0) => acc[i - 1][0],
                _ => acc[i - 1][j - 1].min(acc[i - 1][j]).min(acc[i][j - 1]),
            };
            acc[i][j] = best + cost(i, j);
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let (d, u, l) = (acc[i - 1][j - 1], acc[i - 1][j], acc[i][j - 1]);
            if d <= u && d <= l {
                (i - 1, j - 1)
            } else if u <= l {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    path
}

pub(crate) fn score_alignment(a: &[Saccade], b: &[Saccade], path: &[(usize, usize)], diag: f64) -> MmScores {
    let mut d = [0.0; 5];
    for &(i, j) in path {
        let (u, v) = (&a[i], &b[j]);
        let diff = [u.vector[0] - v.vector[0], u.vector[1] - v.vector[1]];
        d[0] += norm(diff) / (2.0 * diag);
        d[1] += (norm(u.vector) - norm(v.vector)).abs() / diag;
        d[2] += angle(u.vector, v.vector) / PI;
        d[3] += norm([u.start[0] - v.start[0], u.start[1] - v.start[1]]) / diag;
        let longest = u.duration.max(v.duration);
        if longest > 0.0 {
            d[4] += (u.duration - v.duration).abs() / longest;
        }
    }
    let k = path.len() as f64;
    let s = d.map(|x| 1.0 - x / k);
    MmScores {
        shape: s[0],
        length: s[1],
        direction: s[2],
        position: s[3],
        duration: s[4],
    }
}

fn triples(sp: &Scanpath) -> Vec<(f64, f64, f64)> {
    sp.fixations.iter().map(|f| (f.x, f.y, f.tau)).collect()
}

/// MultiMatch similarity on a `width × height` screen.
pub fn multimatch(a: &Scanpath, b: &Scanpath, screen: (f64, f64), cfg: &MmConfig) -> Result<MmScores> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain("multimatch needs at least 2 fixations per scanpath".into()));
    }
    let diag = screen.0.hypot(screen.1);
    let prep = |sp: &Scanpath| {
        let t = triples(sp);
        saccades(&if cfg.simplify { simplify(&t, diag, cfg) } else { t })
    };
    let (sa, sb) = (prep(a), prep(b));
    let path = align_saccades(&sa, &sb);
    Ok(score_alignment(&sa, &sb, &path, diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(points: &[(f64, f64, f64)]) -> Scanpath {
        Scanpath::from_durations("s", "o", points).unwrap()
    }

    #[test]
    fn identical_scanpaths_score_one() {
        let a = sp(&[(10.0, 10.0, 0.2), (300.0, 50.0, 0.3), (120.0, 400.0, 0.25), (500.0, 500.0, 0.4)]);
        let s = multimatch(&a, &a, (800.0, 600.0), &MmConfig::default()).unwrap();
        for v in s.to_array() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn offset_by_half_diagonal() {
        // diagonal 1000; offset (300, 400) has length 500
        let a = sp(&[(0.0, 0.0, 0.2), (100.0, 0.0, 0.2)]);
        let b = sp(&[(300.0, 400.0, 0.2), (400.0, 400.0, 0.2)]);
        let s = multimatch(&a, &b, (600.0, 800.0), &MmConfig::default()).unwrap();
        assert!((s.position - 0.5).abs() < 1e-12);
        assert!((s.shape - 1.0).abs() < 1e-12);
        assert!((s.length - 1.0).abs() < 1e-12);
        assert!((s.direction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opposite_directions() {
        let a = sp(&[(0.0, 0.0, 0.2), (100.0, 0.0, 0.2)]);
        let b = sp(&[(100.0, 0.0, 0.2), (0.0, 0.0, 0.1)]);
        let s = multimatch(&a, &b, (600.0, 800.0), &MmConfig::default()).unwrap();
        assert!(s.direction.abs() < 1e-12);
        assert!((s.length - 1.0).abs() < 1e-12);
        assert!((s.shape - (1.0 - 200.0 / 2000.0)).abs() < 1e-12);
        assert!((s.duration - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_short() {
        let a = sp(&[(0.0, 0.0, 0.2)]);
        assert!(multimatch(&a, &a, (10.0, 10.0), &MmConfig::default()).is_err());
    }

    #[test]
    fn collinear_short_fixation_is_merged() {
        let f = [(0.0, 0.0, 1.0), (50.0, 0.0, 0.1), (100.0, 0.0, 1.0)];
        let s = simplify(&f, 1000.0, &MmConfig::default());
        assert_eq!(s, vec![(0.0, 0.0, 1.0), (100.0, 0.0, 1.1)]);
        // long intermediate fixation survives
        let f = [(0.0, 0.0, 1.0), (50.0, 0.0, 0.9), (100.0, 0.0, 1.0)];
        assert_eq!(simplify(&f, 1000.0, &MmConfig::default()).len(), 3);
        // sharp turn with long saccades survives
        let f = [(0.0, 0.0, 1.0), (500.0, 0.0, 0.1), (0.0, 10.0, 1.0)];
        assert_eq!(simplify(&f, 1000.0, &MmConfig::default()).len(), 3);
    }

    #[test]
    fn alignment_path_is_monotone_and_complete() {
        let a = saccades(&[(0.0, 0.0, 0.1), (10.0, 0.0, 0.1), (10.0, 10.0, 0.1), (0.0, 10.0, 0.1)]);
        let b = saccades(&[(0.0, 0.0, 0.1), (10.0, 0.0, 0.1), (0.0, 10.0, 0.1)]);
        let p = align_saccades(&a, &b);
        assert_eq!(p.first(), Some(&(0, 0)));
        assert_eq!(p.last(), Some(&(2, 1)));
        for w in p.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(di <= 1 && dj <= 1 && di + dj >= 1);
        }
    }
}
