//! The complete scanpath model: readout, recurrent history encoder and
//! mixture heads over one flat parameter vector, plus checkpoint I/O.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Event};
use crate::error::{Error, Result};
use crate::params::{AffineBlock, Layout, ModelConfig, ParamVector, ReadoutShape, TppConfig};
use crate::readout::{readout_forward, Activation, ReadoutParams, SemanticEmbedding};
use crate::tpp::{
    gmm_logpdf, gmm_params, gru_step, init_history, lgmm_logpdf, lgmm_params, make_context,
    EventInput, GruParams, HeadParams, HistoryState,
};
use crate::volume::FeatureVolume;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TPPG";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TppModel {
    config: ModelConfig,
    layout: Layout,
    params: ParamVector,
}

impl TppModel {
    /// All-zero parameters.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = ParamVector::zeros(&layout);
        Ok(TppModel {
            config,
            layout,
            params,
        })
    }

    /// Seeded random initialization. Head biases start from a broad prior
    /// over typical fixation durations (around 250 ms) and positions spread
    /// over the image.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = m.layout.clone();
        let flat = &mut m.params.flat;
        let mut uniform = |b: &AffineBlock, gain: f64| {
            let a = gain * (6.0 / (b.in_dim() + b.out_dim()) as f64).sqrt();
            for v in &mut flat[b.weight.range()] {
                *v = rng.random_range(-a..a);
            }
        };
        for b in &l.conv {
            uniform(b, 1.0);
        }
        uniform(&l.proj, 1.0);
        uniform(&l.embed, 1.0);
        for b in [&l.update, &l.reset, &l.candidate] {
            uniform(b, 1.0);
        }
        for b in [&l.head_w, &l.head_s, &l.head_m, &l.head_omega, &l.head_sigma, &l.head_mu] {
            uniform(b, 0.1);
        }
        for v in &mut flat[l.start_token.range()] {
            *v = rng.random_range(-0.5..0.5);
        }
        let k = config.tpp.k;
        for (i, v) in flat[l.head_m.bias.range()].iter_mut().enumerate() {
            let spread = if k > 1 { i as f64 / (k - 1) as f64 - 0.5 } else { 0.0 };
            *v = 0.25f64.ln() + spread;
        }
        flat[l.head_s.bias.range()].fill(0.6f64.ln());
        flat[l.head_sigma.bias.range()].fill((0.15f64 * 0.15).ln());
        for v in &mut flat[l.head_mu.bias.range()] {
            *v = rng.random_range(0.15..0.85);
        }
        Ok(m)
    }

    pub fn from_flat(config: ModelConfig, flat: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        if flat.len() != m.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters given, model needs {}",
                flat.len(),
                m.params.len()
            )));
        }
        m.params.flat = flat;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn flat(&self) -> &[f64] {
        &self.params.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.params.flat
    }

    /// Mutable access to one named tensor.
    pub fn param_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.params.get_mut(name)
    }

    pub fn readout_params(&self) -> ReadoutParams<'_> {
        ReadoutParams::from_flat(&self.params.flat, &self.layout)
    }

    pub fn gru_params(&self) -> GruParams<'_> {
        GruParams::from_flat(&self.params.flat, &self.layout)
    }

    pub fn head_params(&self) -> HeadParams<'_> {
        HeadParams::from_flat(&self.params.flat, &self.layout)
    }

    /// Semantic embedding of a coordinate-augmented volume.
    pub fn embed(&self, augmented: &FeatureVolume) -> Result<SemanticEmbedding> {
        let r = self.config.readout;
        if augmented.height() != r.height || augmented.width() != r.width {
            return Err(Error::DimensionMismatch(format!(
                "volume grid {}x{} != model grid {}x{}",
                augmented.height(),
                augmented.width(),
                r.height,
                r.width
            )));
        }
        readout_forward(augmented, &self.readout_params(), Activation::Softplus)
    }

    /// Joint log-density of every event of a sequence given `z`, summed.
    pub fn sequence_log_likelihood(&self, z: &SemanticEmbedding, events: &[Event]) -> Result<f64> {
        let gru = self.gru_params();
        let heads = self.head_params();
        let mut h: HistoryState = init_history(&gru);
        let mut total = 0.0;
        for (n, ev) in events.iter().enumerate() {
            let c = make_context(&h, z);
            total += lgmm_logpdf(ev.tau, &lgmm_params(&c, &heads))?;
            total += gmm_logpdf([ev.x, ev.y], &gmm_params(&c, &heads));
            if n + 1 < events.len() {
                h = gru_step(&h, EventInput::new(ev.x, ev.y, ev.tau), &gru)?;
            }
        }
        Ok(total)
    }

    /// Mean per-event negative log-likelihood over `batch`, computed without
    /// the tape.
    pub fn nll(&self, corpus: &Corpus, batch: &[usize]) -> Result<f64> {
        let n = corpus.event_count(batch);
        if n == 0 {
            return Err(Error::Empty("batch has no events".into()));
        }
        let mut embeddings: Vec<Option<SemanticEmbedding>> = vec![None; corpus.volumes.len()];
        let mut total = 0.0;
        for &i in batch {
            let seq = &corpus.sequences[i];
            let slot = &mut embeddings[seq.stimulus];
            if slot.is_none() {
                *slot = Some(self.embed(&corpus.volumes[seq.stimulus])?);
            }
            let z = slot.as_ref().expect("embedding computed above");
            total += self.sequence_log_likelihood(z, &seq.events)?;
        }
        Ok(-total / n as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let t = self.config.tpp;
        let r = self.config.readout;
        let header = [
            CHECKPOINT_VERSION,
            t.d_img as u32,
            t.d_hist as u32,
            t.k as u32,
            t.g as u32,
            t.d_in as u32,
            r.height as u32,
            r.width as u32,
            r.channels as u32,
            self.params.manifest.len() as u32,
        ];
        for v in header {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for e in &self.params.manifest {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.offset as u64).to_le_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for d in &e.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.params.flat.len() as u64).to_le_bytes());
        for v in &self.params.flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mut dim = || -> Result<usize> { Ok(r.u32()? as usize) };
        let tpp = TppConfig {
            d_img: dim()?,
            d_hist: dim()?,
            k: dim()?,
            g: dim()?,
            d_in: dim()?,
        };
        let readout = ReadoutShape {
            height: dim()?,
            width: dim()?,
            channels: dim()?,
        };
        let config = ModelConfig { tpp, readout };
        let mut model = TppModel::zeros(config)?;
        let n_entries = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(n_entries);
        for _ in 0..n_entries {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("manifest name is not UTF-8".into()))?;
            let offset = r.u64()? as usize;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            manifest.push(crate::params::ParamEntry { name, offset, shape });
        }
        if manifest != model.params.manifest {
            return Err(Error::Checkpoint("manifest does not match the model configuration".into()));
        }
        let n = r.u64()? as usize;
        if n != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "{n} parameters stored, configuration needs {}",
                model.params.len()
            )));
        }
        for v in model.params.flat.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            tpp: TppConfig {
                d_img: 4,
                d_hist: 5,
                k: 2,
                g: 3,
                d_in: 3,
            },
            readout: ReadoutShape {
                height: 2,
                width: 2,
                channels: 3,
            },
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = TppModel::init(small(), 9).unwrap();
        let bytes = m.to_bytes();
        let back = TppModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let m = TppModel::init(small(), 9).unwrap();
        let mut bytes = m.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(TppModel::from_bytes(&bytes), Err(Error::Checkpoint(_))));
        let bytes = m.to_bytes();
        assert!(TppModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(TppModel::init(small(), 1).unwrap(), TppModel::init(small(), 1).unwrap());
        assert_ne!(TppModel::init(small(), 1).unwrap(), TppModel::init(small(), 2).unwrap());
    }

    #[test]
    fn embed_checks_grid() {
        let m = TppModel::init(small(), 1).unwrap();
        let v = FeatureVolume::new(3, 2, 6, vec![0.0; 36]).unwrap();
        assert!(m.embed(&v).is_err());
    }
}
