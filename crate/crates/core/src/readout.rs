//! Semantic readout: three 1×1 convolutions over a coordinate-augmented
//! feature volume, then a linear projection of the flattened priority map.

use crate::error::{Error, Result};
use crate::nn::{softplus, Affine};
use crate::params::Layout;
use crate::volume::FeatureVolume;

/// Inter-layer nonlinearity of the readout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Softplus,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Softplus => softplus(x),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReadoutParams<'a> {
    pub conv: [Affine<'a>; 3],
    pub proj: Affine<'a>,
}

impl<'a> ReadoutParams<'a> {
    pub fn from_flat(flat: &'a [f64], layout: &Layout) -> Self {
        ReadoutParams {
            conv: layout.conv.map(|b| Affine::from_block(flat, &b)),
            proj: Affine::from_block(flat, &layout.proj),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv[0].in_dim()
    }
}

/// Stimulus embedding `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbedding(pub Vec<f64>);

impl SemanticEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Per-cell priority values (conv stack output), row-major.
pub fn priority_map(v: &FeatureVolume, p: &ReadoutParams, act: Activation) -> Result<Vec<f64>> {
    if v.channels() != p.in_channels() {
        return Err(Error::DimensionMismatch(format!(
            "volume has {} channels, readout expects {}",
            v.channels(),
            p.in_channels()
        )));
    }
    let mut map = Vec::with_capacity(v.cells());
    let mut x = vec![0.0; v.channels()];
    for cell in v.data().chunks_exact(v.channels()) {
        for (dst, &src) in x.iter_mut().zip(cell) {
            *dst = src as f64;
        }
        let mut a: Vec<f64> = p.conv[0].apply(&x).into_iter().map(|u| act.apply(u)).collect();
        a = p.conv[1].apply(&a).into_iter().map(|u| act.apply(u)).collect();
        map.push(p.conv[2].apply(&a)[0]);
    }
    Ok(map)
}

/// Maps a coordinate-augmented volume to its semantic embedding.
pub fn readout_forward(
    v: &FeatureVolume,
    p: &ReadoutParams,
    act: Activation,
) -> Result<SemanticEmbedding> {
    let map = priority_map(v, p, act)?;
    if map.len() != p.proj.in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "volume has {} cells, projection expects {}",
            map.len(),
            p.proj.in_dim()
        )));
    }
    Ok(SemanticEmbedding(p.proj.apply(&map)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_projection_bias() {
        let v = FeatureVolume::new(2, 2, 4, vec![1.5; 16]).unwrap();
        let zeros = vec![0.0; 128];
        let conv = [
            Affine::new(&zeros[..32], &zeros[..8]),
            Affine::new(&zeros[..8 * 16], &zeros[..16]),
            Affine::new(&zeros[..16], &zeros[..1]),
        ];
        let bias = [0.25, -1.0, 3.0];
        let p = ReadoutParams {
            conv,
            proj: Affine::new(&zeros[..12], &bias),
        };
        let z = readout_forward(&v, &p, Activation::Softplus).unwrap();
        assert_eq!(z.0, bias.to_vec());
    }

    #[test]
    fn scalar_chain_by_hand() {
        // 1x1 grid, one channel, every layer one unit wide
        let v = FeatureVolume::new(1, 1, 1, vec![2.0]).unwrap();
        let (w1, b1, w2, b2, w3, b3, wp, bp) = ([0.5], [0.1], [-1.0], [0.2], [2.0], [0.3], [1.5], [-0.4]);
        let p = ReadoutParams {
            conv: [Affine::new(&w1, &b1), Affine::new(&w2, &b2), Affine::new(&w3, &b3)],
            proj: Affine::new(&wp, &bp),
        };
        let a1 = (1.0f64 + (0.5f64 * 2.0 + 0.1).exp()).ln();
        let a2 = (1.0f64 + (-a1 + 0.2).exp()).ln();
        let expected = 1.5 * (2.0 * a2 + 0.3) - 0.4;
        let z = readout_forward(&v, &p, Activation::Softplus).unwrap();
        assert!((z.0[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn channel_mismatch() {
        let v = FeatureVolume::new(1, 1, 3, vec![0.0; 3]).unwrap();
        let w = [0.0; 2];
        let b = [0.0];
        let p = ReadoutParams {
            conv: [Affine::new(&w, &b); 3],
            proj: Affine::new(&w[..1], &b),
        };
        assert!(matches!(
            readout_forward(&v, &p, Activation::Softplus),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
