use rand::Rng;
use rand_distr::StandardNormal;

use super::Context;
use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, softmax, Affine, LN_2PI};
use crate::params::Layout;

/// Affine heads mapping a context to both mixtures.
#[derive(Debug, Clone, Copy)]
pub struct HeadParams<'a> {
    pub w: Affine<'a>,
    pub s: Affine<'a>,
    pub m: Affine<'a>,
    pub omega: Affine<'a>,
    pub sigma: Affine<'a>,
    pub mu: Affine<'a>,
}

impl<'a> HeadParams<'a> {
    pub fn from_flat(flat: &'a [f64], layout: &Layout) -> Self {
        HeadParams {
            w: Affine::from_block(flat, &layout.head_w),
            s: Affine::from_block(flat, &layout.head_s),
            m: Affine::from_block(flat, &layout.head_m),
            omega: Affine::from_block(flat, &layout.head_omega),
            sigma: Affine::from_block(flat, &layout.head_sigma),
            mu: Affine::from_block(flat, &layout.head_mu),
        }
    }
}

fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn check_simplex(w: &[f64], what: &str) -> Result<()> {
    let sum: f64 = w.iter().sum();
    if w.is_empty() || w.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("{what} weights are not on the simplex")));
    }
    Ok(())
}

/// Log-normal mixture over inter-event times: weights `w`, log-space means
/// `m` and log-space standard deviations `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LgmmParams {
    w: Vec<f64>,
    m: Vec<f64>,
    s: Vec<f64>,
}

impl LgmmParams {
    pub fn new(w: Vec<f64>, m: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        if w.len() != m.len() || w.len() != s.len() {
            return Err(Error::DimensionMismatch("LGMM parameter lengths differ".into()));
        }
        check_simplex(&w, "LGMM")?;
        if s.iter().any(|v| !(*v > 0.0)) || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("LGMM scales must be positive, means finite".into()));
        }
        Ok(LgmmParams { w, m, s })
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn means(&self) -> &[f64] {
        &self.m
    }

    pub fn scales(&self) -> &[f64] {
        &self.s
    }

    pub fn components(&self) -> usize {
        self.w.len()
    }
}

/// `w = softmax(V_w c)`, `s = exp(V_s c)`, `m = V_m c`.
pub fn lgmm_params(c: &Context, hp: &HeadParams) -> LgmmParams {
    let c = c.as_slice();
    LgmmParams {
        w: softmax(&hp.w.apply(c)),
        s: hp.s.apply(c).into_iter().map(f64::exp).collect(),
        m: hp.m.apply(c),
    }
}

pub fn lgmm_logpdf(tau: f64, p: &LgmmParams) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("inter-event time must be positive, got {tau}")));
    }
    let lt = tau.ln();
    let terms: Vec<f64> = (0..p.w.len())
        .map(|k| {
            let z = (lt - p.m[k]) / p.s[k];
            p.w[k].ln() - lt - p.s[k].ln() - 0.5 * LN_2PI - 0.5 * z * z
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

pub fn lgmm_sample<R: Rng + ?Sized>(p: &LgmmParams, rng: &mut R) -> f64 {
    let k = categorical(&p.w, rng);
    let n: f64 = rng.sample(StandardNormal);
    (p.m[k] + p.s[k] * n).exp().max(f64::MIN_POSITIVE)
}

/// Diagonal bivariate Gaussian mixture over normalized positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm2dParams {
    omega: Vec<f64>,
    mu: Vec<[f64; 2]>,
    var: Vec<[f64; 2]>,
}

impl Gmm2dParams {
    /// `var` holds the diagonal of each component's covariance.
    pub fn new(omega: Vec<f64>, mu: Vec<[f64; 2]>, var: Vec<[f64; 2]>) -> Result<Self> {
        if omega.len() != mu.len() || omega.len() != var.len() {
            return Err(Error::DimensionMismatch("GMM parameter lengths differ".into()));
        }
        check_simplex(&omega, "GMM")?;
        if var.iter().flatten().any(|v| !(*v > 0.0)) || mu.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("GMM variances must be positive, means finite".into()));
        }
        Ok(Gmm2dParams { omega, mu, var })
    }

    pub fn weights(&self) -> &[f64] {
        &self.omega
    }

    pub fn means(&self) -> &[[f64; 2]] {
        &self.mu
    }

    pub fn variances(&self) -> &[[f64; 2]] {
        &self.var
    }

    pub fn components(&self) -> usize {
        self.omega.len()
    }
}

/// `ω = softmax(R_ω c)`, `Σ = diag(exp(R_Σ c))`, `μ = R_μ c`. The `R_Σ` and
/// `R_μ` outputs are interleaved `(x, y)` per component.
pub fn gmm_params(c: &Context, hp: &HeadParams) -> Gmm2dParams {
    let c = c.as_slice();
    let pairs = |v: Vec<f64>| -> Vec<[f64; 2]> { v.chunks_exact(2).map(|p| [p[0], p[1]]).collect() };
    Gmm2dParams {
        omega: softmax(&hp.omega.apply(c)),
        var: pairs(hp.sigma.apply(c).into_iter().map(f64::exp).collect()),
        mu: pairs(hp.mu.apply(c)),
    }
}

pub fn gmm_logpdf(r: [f64; 2], p: &Gmm2dParams) -> f64 {
    let terms: Vec<f64> = (0..p.omega.len())
        .map(|g| {
            let [mx, my] = p.mu[g];
            let [vx, vy] = p.var[g];
            let quad = (r[0] - mx).powi(2) / vx + (r[1] - my).powi(2) / vy;
            p.omega[g].ln() - LN_2PI - 0.5 * (vx.ln() + vy.ln()) - 0.5 * quad
        })
        .collect();
    log_sum_exp(&terms)
}

/// Axis-aligned sampling region for positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub const UNIT: Bounds = Bounds {
        min: [0.0, 0.0],
        max: [1.0, 1.0],
    };

    pub fn contains(&self, r: [f64; 2]) -> bool {
        (0..2).all(|i| r[i] >= self.min[i] && r[i] <= self.max[i])
    }

    pub fn clamp(&self, r: [f64; 2]) -> [f64; 2] {
        [
            r[0].clamp(self.min[0], self.max[0]),
            r[1].clamp(self.min[1], self.max[1]),
        ]
    }
}

const MAX_RESAMPLES: usize = 16;

/// Draws a position; off-bounds draws are redrawn up to 16 times, after
/// which the last draw is clamped onto the bounds.
pub fn gmm_sample<R: Rng + ?Sized>(p: &Gmm2dParams, bounds: Bounds, rng: &mut R) -> [f64; 2] {
    let mut r = [0.0; 2];
    for _ in 0..=MAX_RESAMPLES {
        let g = categorical(&p.omega, rng);
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        r = [
            p.mu[g][0] + p.var[g][0].sqrt() * nx,
            p.mu[g][1] + p.var[g][1].sqrt() * ny,
        ];
        if bounds.contains(r) {
            return r;
        }
    }
    bounds.clamp(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lgmm1(m: f64, s: f64) -> LgmmParams {
        LgmmParams::new(vec![1.0], vec![m], vec![s]).unwrap()
    }

    fn gmm1(mu: [f64; 2], var: [f64; 2]) -> Gmm2dParams {
        Gmm2dParams::new(vec![1.0], vec![mu], vec![var]).unwrap()
    }

    #[test]
    fn lgmm_closed_forms() {
        let p = lgmm1(0.0, 1.0);
        assert!((lgmm_logpdf(1.0, &p).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        let e = std::f64::consts::E;
        assert!((lgmm_logpdf(e, &p).unwrap() + 2.418_938_533_204_672_7).abs() < 1e-12);
        assert!(matches!(lgmm_logpdf(0.0, &p), Err(Error::Domain(_))));
        assert!(lgmm_logpdf(-1.0, &p).is_err());
    }

    #[test]
    fn gmm_closed_forms() {
        let p = gmm1([0.0, 0.0], [1.0, 1.0]);
        assert!((gmm_logpdf([0.0, 0.0], &p) + 1.837_877_066_409_345_5).abs() < 1e-12);
        assert!((gmm_logpdf([1.0, 1.0], &p) + 2.837_877_066_409_345_5).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(LgmmParams::new(vec![0.5, 0.4], vec![0.0; 2], vec![1.0; 2]).is_err());
        assert!(LgmmParams::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(Gmm2dParams::new(vec![1.0], vec![[0.0; 2]], vec![[1.0, -1.0]]).is_err());
    }

    #[test]
    fn degenerate_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = lgmm1(0.3f64.ln(), 1e-12);
        let tau = lgmm_sample(&p, &mut rng);
        assert!((tau - 0.3).abs() < 1e-9);

        let g = gmm1([0.5, 0.5], [1e-24, 1e-24]);
        let r = gmm_sample(&g, Bounds::UNIT, &mut rng);
        assert!((r[0] - 0.5).abs() < 1e-11 && (r[1] - 0.5).abs() < 1e-11);

        let far = gmm1([2.0, 2.0], [1e-24, 1e-24]);
        assert_eq!(gmm_sample(&far, Bounds::UNIT, &mut rng), [1.0, 1.0]);
    }

    #[test]
    fn seeded_sampling_is_repeatable() {
        let p = LgmmParams::new(vec![0.3, 0.7], vec![0.0, 1.0], vec![1.0, 0.5]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| lgmm_sample(&p, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn log_sum_exp_keeps_tiny_densities_finite() {
        // best component exponent near -1e6, the other near -1e9
        let p = Gmm2dParams::new(vec![0.5, 0.5], vec![[0.0, 0.0], [0.0, 0.0]], vec![[1e-6, 1.0], [1e-9, 1.0]])
            .unwrap();
        let lp = gmm_logpdf([1.0, 0.0], &p);
        assert!(lp.is_finite());
        assert!(lp < -4e5);
    }
}
