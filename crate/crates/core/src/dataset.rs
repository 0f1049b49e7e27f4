//! Feature-vector corpora: the MVQF file format and seeded synthesis.
//!
//! MVQF layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MVQF"
//! 4       4     version (u32, currently 1)
//! 8       2     N, sub-vectors per feature (u16)
//! 10      2     D, sub-vector dimension (u16)
//! 12      4     count, number of feature vectors (u32)
//! 16      ...   count * N * D f32 values, one feature vector per row
//! ```

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal, StandardNormal};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::vq::CodebookBank;

pub const MAGIC: &[u8; 4] = b"MVQF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// `count` feature vectors of length `N * D`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_sub: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(n_sub: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if n_sub == 0 || dim == 0 {
            return Err(Error::Config(format!("dataset needs N, D >= 1 (got N={n_sub}, D={dim})")));
        }
        if values.len() % (n_sub * dim) != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form whole feature vectors of length {}",
                values.len(),
                n_sub * dim
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("feature values must be finite".into()));
        }
        Ok(Dataset { n_sub, dim, values })
    }

    pub fn from_rows(n_sub: usize, dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != n_sub * dim) {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has length {}, expected N*D = {}",
                r.len(),
                n_sub * dim
            )));
        }
        Self::new(n_sub, dim, rows.iter().flatten().copied().collect())
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_len(&self) -> usize {
        self.n_sub * self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.feature_len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn feature(&self, k: usize) -> &[f64] {
        let len = self.feature_len();
        &self.values[k * len..(k + 1) * len]
    }

    /// Sub-vector `i` of feature vector `k`.
    #[inline]
    pub fn sub(&self, k: usize, i: usize) -> &[f64] {
        let start = k * self.feature_len() + i * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.feature_len())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// First `count` feature vectors.
    pub fn head(&self, count: usize) -> Dataset {
        let end = count.min(self.len()) * self.feature_len();
        Dataset {
            n_sub: self.n_sub,
            dim: self.dim,
            values: self.values[..end].to_vec(),
        }
    }

    /// Rejects datasets whose shape differs from the bank's `(N, D)`.
    pub fn check_bank(&self, bank: &CodebookBank) -> Result<()> {
        if self.n_sub != bank.n_sub() || self.dim != bank.dim() {
            return Err(Error::DimensionMismatch(format!(
                "dataset has N={}, D={} but the bank expects N={}, D={}",
                self.n_sub,
                self.dim,
                bank.n_sub(),
                bank.dim()
            )));
        }
        Ok(())
    }

    /// MVQF bytes. Values are narrowed to `f32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = u16::try_from(self.n_sub).map_err(|_| Error::Config("N exceeds 65535".into()))?;
        let d = u16::try_from(self.dim).map_err(|_| Error::Config("D exceeds 65535".into()))?;
        let count = u32::try_from(self.len()).map_err(|_| Error::Config("too many feature vectors".into()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        for &x in &self.values {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("MVQF header needs 16 bytes, file has {}", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic: not an MVQF feature file".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported MVQF version {version}")));
        }
        let n_sub = u16::from_le_bytes(bytes[8..10].try_into().unwrap()) as usize;
        let dim = u16::from_le_bytes(bytes[10..12].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let expected = HEADER_LEN + 4 * count * n_sub * dim;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "MVQF header declares {count} vectors of N={n_sub}, D={dim} ({expected} bytes), file has {} bytes",
                bytes.len()
            )));
        }
        let values = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(n_sub, dim, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Recipe for a synthetic corpus. Values are rounded to `f32` so a written
/// file reads back identically.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthSpec {
    /// i.i.d. standard normal entries.
    Gaussian { count: usize, n_sub: usize, dim: usize, seed: u64 },
    /// Each sub-vector drawn from one of `components` isotropic Gaussians in
    /// `R^D` with unit-spread random means and standard deviation 0.3.
    Mixture {
        count: usize,
        n_sub: usize,
        dim: usize,
        components: usize,
        seed: u64,
    },
}

impl SynthSpec {
    pub fn generate(&self) -> Result<Dataset> {
        match *self {
            SynthSpec::Gaussian { count, n_sub, dim, seed } => synth_gaussian(count, n_sub, dim, seed),
            SynthSpec::Mixture {
                count,
                n_sub,
                dim,
                components,
                seed,
            } => synth_mixture(count, n_sub, dim, components, seed),
        }
    }
}

fn narrow(x: f64) -> f64 {
    x as f32 as f64
}

pub fn synth_gaussian(count: usize, n_sub: usize, dim: usize, seed: u64) -> Result<Dataset> {
    let mut rng = rng_from_seed(seed);
    let values = (0..count * n_sub * dim)
        .map(|_| narrow(StandardNormal.sample(&mut rng)))
        .collect();
    Dataset::new(n_sub, dim, values)
}

pub fn synth_mixture(count: usize, n_sub: usize, dim: usize, components: usize, seed: u64) -> Result<Dataset> {
    if components == 0 {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    let mut rng = rng_from_seed(seed);
    let means: Vec<Vec<f64>> = (0..components)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let noise = Normal::new(0.0, 0.3).expect("valid deviation");
    let mut values = Vec::with_capacity(count * n_sub * dim);
    for _ in 0..count * n_sub {
        let c = &means[rng.random_range(0..components)];
        values.extend(c.iter().map(|m| narrow(m + noise.sample(&mut rng))));
    }
    Dataset::new(n_sub, dim, values)
}
