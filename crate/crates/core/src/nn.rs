//! Small dense building blocks shared by the plain (tape-free) forward path.

use crate::params::AffineBlock;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Borrowed view of one affine map `y = W x + b`, `W` row-major (out × in).
#[derive(Debug, Clone, Copy)]
pub struct Affine<'a> {
    pub weight: &'a [f64],
    pub bias: &'a [f64],
}

impl<'a> Affine<'a> {
    pub fn new(weight: &'a [f64], bias: &'a [f64]) -> Self {
        debug_assert!(bias.is_empty() || weight.len().is_multiple_of(bias.len()));
        Affine { weight, bias }
    }

    pub fn from_block(flat: &'a [f64], b: &AffineBlock) -> Self {
        Affine {
            weight: &flat[b.weight.range()],
            bias: &flat[b.bias.range()],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.len() / self.bias.len().max(1)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.in_dim();
        debug_assert_eq!(x.len(), n);
        self.weight
            .chunks_exact(n)
            .zip(self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| x - lse).collect()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_primitives() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!((log_sum_exp(&[-1e6, -1e9]) + 1e6).abs() < 1e-9);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 2]), f64::NEG_INFINITY);
        let s = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((LN_2PI - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn affine_apply() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [0.5, -0.5];
        let a = Affine::new(&w, &b);
        assert_eq!((a.out_dim(), a.in_dim()), (2, 3));
        assert_eq!(a.apply(&[1.0, 0.0, -1.0]), vec![-1.5, -2.5]);
    }
}
