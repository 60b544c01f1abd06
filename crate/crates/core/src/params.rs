//! Model dimensions and the flat parameter vector with its manifest.

use crate::error::{Error, Result};

/// Output channels of the three 1×1 convolutions of the readout.
pub const READOUT_WIDTHS: [usize; 3] = [8, 16, 1];

/// Dimensions of the TPP part of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TppConfig {
    /// Semantic embedding size.
    pub d_img: usize,
    /// Recurrent state size.
    pub d_hist: usize,
    /// Log-normal mixture components (durations).
    pub k: usize,
    /// Bivariate Gaussian mixture components (positions).
    pub g: usize,
    /// Event embedding size fed to the recurrent cell.
    pub d_in: usize,
}

impl Default for TppConfig {
    fn default() -> Self {
        TppConfig {
            d_img: 256,
            d_hist: 256,
            k: 4,
            g: 16,
            d_in: 64,
        }
    }
}

impl TppConfig {
    pub fn d_ctx(&self) -> usize {
        self.d_hist + self.d_img
    }
}

/// Spatial grid and channel count of the raw feature volumes the readout
/// consumes (before coordinate channels are appended).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadoutShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub tpp: TppConfig,
    pub readout: ReadoutShape,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.tpp;
        let r = &self.readout;
        let dims = [t.d_img, t.d_hist, t.k, t.g, t.d_in, r.height, r.width, r.channels];
        if dims.contains(&0) {
            return Err(Error::Config("all model dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Location of one named tensor inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Weight matrix (out × in, row-major) and bias of one affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineBlock {
    pub weight: Block,
    pub bias: Block,
}

impl AffineBlock {
    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Biases and the start token are excluded from weight decay.
    pub fn decays(&self) -> bool {
        !(self.name.ends_with(".bias") || self.name == "gru.start_token")
    }
}

/// Offsets of every parameter tensor for a given [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub conv: [AffineBlock; 3],
    pub proj: AffineBlock,
    pub embed: AffineBlock,
    pub start_token: Block,
    pub update: AffineBlock,
    pub reset: AffineBlock,
    pub candidate: AffineBlock,
    pub head_w: AffineBlock,
    pub head_s: AffineBlock,
    pub head_m: AffineBlock,
    pub head_omega: AffineBlock,
    pub head_sigma: AffineBlock,
    pub head_mu: AffineBlock,
    pub manifest: Vec<ParamEntry>,
    pub total: usize,
}

struct Builder {
    offset: usize,
    manifest: Vec<ParamEntry>,
}

impl Builder {
    fn block(&mut self, name: &str, rows: usize, cols: usize) -> Block {
        let b = Block {
            offset: self.offset,
            rows,
            cols,
        };
        let shape = if cols == 1 { vec![rows] } else { vec![rows, cols] };
        self.manifest.push(ParamEntry {
            name: name.to_owned(),
            offset: self.offset,
            shape,
        });
        self.offset += rows * cols;
        b
    }

    fn affine(&mut self, name: &str, out: usize, inp: usize) -> AffineBlock {
        AffineBlock {
            weight: self.block(&format!("{name}.weight"), out, inp),
            bias: self.block(&format!("{name}.bias"), out, 1),
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let t = cfg.tpp;
        let r = cfg.readout;
        let mut b = Builder {
            offset: 0,
            manifest: Vec::new(),
        };
        let [w1, w2, w3] = READOUT_WIDTHS;
        let c_in = r.channels + crate::volume::COORD_CHANNELS;
        let conv = [
            b.affine("readout.conv1", w1, c_in),
            b.affine("readout.conv2", w2, w1),
            b.affine("readout.conv3", w3, w2),
        ];
        let proj = b.affine("readout.proj", t.d_img, r.height * r.width);
        let embed = b.affine("gru.embed", t.d_in, 3);
        let start_token = b.block("gru.start_token", t.d_in, 1);
        let gate_in = t.d_in + t.d_hist;
        let update = b.affine("gru.update", t.d_hist, gate_in);
        let reset = b.affine("gru.reset", t.d_hist, gate_in);
        let candidate = b.affine("gru.candidate", t.d_hist, gate_in);
        let ctx = t.d_ctx();
        let head_w = b.affine("head.w", t.k, ctx);
        let head_s = b.affine("head.s", t.k, ctx);
        let head_m = b.affine("head.m", t.k, ctx);
        let head_omega = b.affine("head.omega", t.g, ctx);
        let head_sigma = b.affine("head.sigma", 2 * t.g, ctx);
        let head_mu = b.affine("head.mu", 2 * t.g, ctx);
        Layout {
            conv,
            proj,
            embed,
            start_token,
            update,
            reset,
            candidate,
            head_w,
            head_s,
            head_m,
            head_omega,
            head_sigma,
            head_mu,
            total: b.offset,
            manifest: b.manifest,
        }
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.manifest.iter().find(|e| e.name == name)
    }

    /// Per-coordinate weight-decay mask in manifest order.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for e in &self.manifest {
            if e.decays() {
                mask[e.offset..e.offset + e.len()].fill(true);
            }
        }
        mask
    }
}

/// All model parameters concatenated in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub flat: Vec<f64>,
    pub manifest: Vec<ParamEntry>,
}

impl ParamVector {
    pub fn zeros(layout: &Layout) -> Self {
        ParamVector {
            flat: vec![0.0; layout.total],
            manifest: layout.manifest.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        let e = self.manifest.iter().find(|e| e.name == name)?;
        Some(&self.flat[e.offset..e.offset + e.len()])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let e = self.manifest.iter().find(|e| e.name == name)?;
        let r = e.offset..e.offset + e.len();
        Some(&mut self.flat[r])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            tpp: TppConfig {
                d_img: 5,
                d_hist: 4,
                k: 2,
                g: 3,
                d_in: 6,
            },
            readout: ReadoutShape {
                height: 2,
                width: 3,
                channels: 7,
            },
        }
    }

    #[test]
    fn manifest_is_contiguous_and_complete() {
        let l = Layout::new(&cfg());
        let mut next = 0;
        for e in &l.manifest {
            assert_eq!(e.offset, next, "{}", e.name);
            next += e.len();
        }
        assert_eq!(next, l.total);
        assert_eq!(l.conv[0].in_dim(), 10);
        assert_eq!(l.proj.in_dim(), 6);
        assert_eq!(l.head_mu.out_dim(), 6);
        assert_eq!(l.head_w.in_dim(), 9);
        assert_eq!(Layout::new(&cfg()), l);
    }

    #[test]
    fn decay_excludes_biases_and_start_token() {
        let l = Layout::new(&cfg());
        let mask = l.decay_mask();
        assert!(!mask[l.start_token.offset]);
        assert!(!mask[l.head_w.bias.offset]);
        assert!(mask[l.head_w.weight.offset]);
        assert!(mask[l.conv[0].weight.offset]);
    }
}
