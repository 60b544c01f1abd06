//! CNN activation volumes and the `FVOL` interchange format.
//!
//! Layout on disk: `"FVOL"` | version `u32` | H `u32` | W `u32` | C `u32` |
//! H·W·C little-endian `f32`, row-major with the channel index fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const FVOL_MAGIC: &[u8; 4] = b"FVOL";
pub const FVOL_VERSION: u32 = 1;

/// Number of channels appended by [`coordconv_augment`].
pub const COORD_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureVolume {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(FeatureVolume {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Feature vector of one grid cell.
    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.data.len());
        out.extend_from_slice(FVOL_MAGIC);
        for v in [FVOL_VERSION, self.height as u32, self.width as u32, self.channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != FVOL_MAGIC {
            return Err(Error::BadMagic);
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let version = word(0);
        if version != FVOL_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let (h, w, c) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let payload = &bytes[20..];
        let expected = h * w * c;
        if payload.len() != 4 * expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: payload.len() / 4,
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        FeatureVolume::new(h, w, c, data)
    }
}

pub fn load_feature_volume(path: &Path) -> Result<FeatureVolume> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    FeatureVolume::from_bytes(&bytes)
}

pub fn write_feature_volume(path: &Path, v: &FeatureVolume) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&v.to_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Evenly spaced values over `[-1, 1]`; a single sample sits at 0.
fn linspace_sym(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (n - 1) as f64
        }
    })
}

/// Appends x, y and radial coordinate channels to every cell.
///
/// x runs over columns and y over rows, both normalized to `[-1, 1]`;
/// the radial channel is `sqrt(x² + y²) / sqrt(2)`.
pub fn coordconv_augment(v: &FeatureVolume) -> FeatureVolume {
    let c_out = v.channels + COORD_CHANNELS;
    let xs: Vec<f64> = linspace_sym(v.width).collect();
    let ys: Vec<f64> = linspace_sym(v.height).collect();
    let mut data = Vec::with_capacity(v.cells() * c_out);
    for (row, &y) in ys.iter().enumerate() {
        for (col, &x) in xs.iter().enumerate() {
            data.extend_from_slice(v.cell(row, col));
            let r = x.hypot(y) / std::f64::consts::SQRT_2;
            data.extend([x as f32, y as f32, r as f32]);
        }
    }
    FeatureVolume {
        height: v.height,
        width: v.width,
        channels: c_out,
        data,
    }
}
