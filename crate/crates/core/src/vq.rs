//! Product vector quantization.
//!
//! A feature vector of length `N * D` is split into `N` sub-vectors of
//! dimension `D`. Each sub-vector is quantized against a `2^B`-entry codebook
//! and its codeword index is sent as a fixed-width big-endian bit string.
//!
//! A [`CodebookBank`] holds `V` codebooks that share `(D, B)`, each paired
//! with an `N x B` bit-flip profile. Codebook `0` is trained for the lowest
//! flip probabilities, codebook `V - 1` for the highest. All indices in this
//! crate (codebooks, sub-vectors, bit positions) are zero-based.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared Euclidean distance.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A set of `2^B` codewords of dimension `D`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    bits: u32,
    codewords: Vec<f64>,
}

impl Codebook {
    pub fn new(dim: usize, bits: u32, codewords: Vec<Vec<f64>>) -> Result<Self> {
        let flat: Vec<f64> = codewords.iter().flatten().copied().collect();
        if codewords.iter().any(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "every codeword must have length {dim}"
            )));
        }
        Self::from_flat(dim, bits, flat)
    }

    pub fn from_flat(dim: usize, bits: u32, codewords: Vec<f64>) -> Result<Self> {
        if dim == 0 || bits == 0 || bits > 24 {
            return Err(Error::Config(format!(
                "codebook needs D >= 1 and 1 <= B <= 24 (got D={dim}, B={bits})"
            )));
        }
        let expected = (1usize << bits) * dim;
        if codewords.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "codebook with D={dim}, B={bits} needs {expected} values, got {}",
                codewords.len()
            )));
        }
        if codewords.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("codeword entries must be finite".into()));
        }
        Ok(Codebook {
            dim,
            bits,
            codewords,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of codewords, `2^B`.
    pub fn len(&self) -> usize {
        1 << self.bits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn codeword(&self, k: usize) -> &[f64] {
        &self.codewords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn codeword_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.codewords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.codewords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.codewords
    }

    /// Index of the nearest codeword and its squared distance. Ties go to the
    /// smallest index. The caller guarantees `sub.len() == D`.
    pub(crate) fn nearest(&self, sub: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, c) in self.iter().enumerate() {
            let d = squared_distance(sub, c);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

/// Per-position, per-bit flip probabilities attached to one codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct BitFlipProfile {
    n_sub: usize,
    bits: u32,
    mu: Vec<f64>,
    mu_min: f64,
}

impl BitFlipProfile {
    /// Builds a profile from `N` rows of `B` probabilities, each in `[mu_min, 0.5]`.
    pub fn new(rows: Vec<Vec<f64>>, mu_min: f64) -> Result<Self> {
        let n_sub = rows.len();
        let bits = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != bits) {
            return Err(Error::DimensionMismatch(
                "profile rows must all have length B".into(),
            ));
        }
        Self::from_flat(n_sub, bits as u32, rows.into_iter().flatten().collect(), mu_min)
    }

    pub fn from_flat(n_sub: usize, bits: u32, mu: Vec<f64>, mu_min: f64) -> Result<Self> {
        if n_sub == 0 || bits == 0 {
            return Err(Error::Config("profile needs N >= 1 and B >= 1".into()));
        }
        if mu.len() != n_sub * bits as usize {
            return Err(Error::DimensionMismatch(format!(
                "profile with N={n_sub}, B={bits} needs {} entries, got {}",
                n_sub * bits as usize,
                mu.len()
            )));
        }
        if !(mu_min > 0.0 && mu_min < 0.5) {
            return Err(Error::InvalidProbability(format!(
                "mu_min {mu_min} outside (0, 0.5)"
            )));
        }
        if let Some(bad) = mu.iter().find(|&&m| !(m >= mu_min && m <= 0.5)) {
            return Err(Error::InvalidProbability(format!(
                "profile entry {bad} outside [{mu_min}, 0.5]"
            )));
        }
        Ok(BitFlipProfile {
            n_sub,
            bits,
            mu,
            mu_min,
        })
    }

    /// A profile with every entry equal to `value`.
    pub fn uniform(n_sub: usize, bits: u32, value: f64, mu_min: f64) -> Result<Self> {
        Self::from_flat(n_sub, bits, vec![value; n_sub * bits as usize], mu_min)
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mu_min(&self) -> f64 {
        self.mu_min
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let b = self.bits as usize;
        &self.mu[i * b..(i + 1) * b]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mu[i * self.bits as usize + j]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.mu
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.mu.chunks_exact(self.bits as usize)
    }
}

/// `V` codebooks with their bit-flip profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookBank {
    dim: usize,
    bits: u32,
    n_sub: usize,
    codebooks: Vec<Codebook>,
    profiles: Vec<BitFlipProfile>,
    mu_min: Vec<f64>,
    lambda: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    version: u32,
    #[serde(rename = "D")]
    dim: usize,
    #[serde(rename = "B")]
    bits: u32,
    #[serde(rename = "N")]
    n_sub: usize,
    #[serde(rename = "V")]
    count: usize,
    mu_min: Vec<f64>,
    lambda: Vec<f64>,
    codebooks: Vec<Vec<Vec<f64>>>,
    profiles: Vec<Vec<Vec<f64>>>,
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl CodebookBank {
    pub fn new(
        codebooks: Vec<Codebook>,
        profiles: Vec<BitFlipProfile>,
        lambda: Vec<f64>,
    ) -> Result<Self> {
        let first = codebooks
            .first()
            .ok_or_else(|| Error::Config("bank needs at least one codebook".into()))?;
        let (dim, bits) = (first.dim(), first.bits());
        let n_sub = profiles.first().map_or(0, BitFlipProfile::n_sub);
        if profiles.len() != codebooks.len() || lambda.len() != codebooks.len() {
            return Err(Error::DimensionMismatch(format!(
                "bank has {} codebooks, {} profiles and {} lambda values",
                codebooks.len(),
                profiles.len(),
                lambda.len()
            )));
        }
        if codebooks.iter().any(|c| c.dim() != dim || c.bits() != bits) {
            return Err(Error::DimensionMismatch(
                "all codebooks must share (D, B)".into(),
            ));
        }
        if profiles.iter().any(|p| p.n_sub() != n_sub || p.bits() != bits) {
            return Err(Error::DimensionMismatch(
                "all profiles must share (N, B) with B matching the codebooks".into(),
            ));
        }
        let mu_min: Vec<f64> = profiles.iter().map(BitFlipProfile::mu_min).collect();
        if !strictly_increasing(&mu_min) {
            return Err(Error::Config("mu_min list must be strictly increasing".into()));
        }
        if !strictly_increasing(&lambda) || lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("lambda list must be strictly increasing".into()));
        }
        Ok(CodebookBank {
            dim,
            bits,
            n_sub,
            codebooks,
            profiles,
            mu_min,
            lambda,
        })
    }

    /// Sub-vector dimension `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bits per codeword index `B`.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Number of sub-vectors per feature `N`.
    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    /// Number of codebooks `V`.
    pub fn len(&self) -> usize {
        self.codebooks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codebooks.is_empty()
    }

    /// Feature length `N * D`.
    pub fn feature_len(&self) -> usize {
        self.n_sub * self.dim
    }

    /// Bits per feature vector `N * B`.
    pub fn total_bits(&self) -> usize {
        self.n_sub * self.bits as usize
    }

    pub fn codebook(&self, v: usize) -> &Codebook {
        &self.codebooks[v]
    }

    pub fn profile(&self, v: usize) -> &BitFlipProfile {
        &self.profiles[v]
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    pub fn profiles(&self) -> &[BitFlipProfile] {
        &self.profiles
    }

    pub fn mu_min(&self) -> &[f64] {
        &self.mu_min
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub(crate) fn check_codebook(&self, v: usize) -> Result<()> {
        if v >= self.len() {
            return Err(Error::InvalidCodebook {
                index: v,
                count: self.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_assignment(&self, assignment: &[usize]) -> Result<()> {
        if assignment.len() != self.n_sub {
            return Err(Error::DimensionMismatch(format!(
                "assignment has {} entries, bank has N={}",
                assignment.len(),
                self.n_sub
            )));
        }
        assignment.iter().try_for_each(|&v| self.check_codebook(v))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = BankFile {
            version: 1,
            dim: self.dim,
            bits: self.bits,
            n_sub: self.n_sub,
            count: self.len(),
            mu_min: self.mu_min.clone(),
            lambda: self.lambda.clone(),
            codebooks: self
                .codebooks
                .iter()
                .map(|c| c.iter().map(<[f64]>::to_vec).collect())
                .collect(),
            profiles: self
                .profiles
                .iter()
                .map(|p| p.rows().map(<[f64]>::to_vec).collect())
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BankFile = serde_json::from_str(text)?;
        if file.version != 1 {
            return Err(Error::Format(format!(
                "unsupported bank version {}",
                file.version
            )));
        }
        if file.codebooks.len() != file.count || file.profiles.len() != file.count {
            return Err(Error::Format(format!(
                "bank declares V={} but holds {} codebooks and {} profiles",
                file.count,
                file.codebooks.len(),
                file.profiles.len()
            )));
        }
        if file.mu_min.len() != file.count {
            return Err(Error::Format("mu_min length differs from V".into()));
        }
        let codebooks = file
            .codebooks
            .into_iter()
            .map(|cws| {
                if cws.len() != 1 << file.bits {
                    return Err(Error::Format(format!(
                        "codebook holds {} codewords, expected 2^{}",
                        cws.len(),
                        file.bits
                    )));
                }
                Codebook::new(file.dim, file.bits, cws)
            })
            .collect::<Result<Vec<_>>>()?;
        let profiles = file
            .profiles
            .into_iter()
            .zip(&file.mu_min)
            .map(|(rows, &mu_min)| {
                if rows.len() != file.n_sub {
                    return Err(Error::Format(format!(
                        "profile holds {} rows, expected N={}",
                        rows.len(),
                        file.n_sub
                    )));
                }
                BitFlipProfile::new(rows, mu_min)
            })
            .collect::<Result<Vec<_>>>()?;
        let bank = CodebookBank::new(codebooks, profiles, file.lambda)?;
        if bank.bits != file.bits {
            return Err(Error::Format("profile width differs from B".into()));
        }
        Ok(bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Splits a feature vector into consecutive sub-vectors of length `dim`.
pub fn split(features: &[f64], dim: usize) -> Result<Vec<&[f64]>> {
    if dim == 0 || features.len() % dim != 0 {
        return Err(Error::DimensionMismatch(format!(
            "feature length {} is not a multiple of D={dim}",
            features.len()
        )));
    }
    Ok(features.chunks_exact(dim).collect())
}

/// Nearest codeword by squared Euclidean distance; ties go to the lowest index.
pub fn quantize<'a>(sub: &[f64], codebook: &'a Codebook) -> Result<(usize, &'a [f64])> {
    if sub.len() != codebook.dim() {
        return Err(Error::DimensionMismatch(format!(
            "sub-vector length {} differs from codebook D={}",
            sub.len(),
            codebook.dim()
        )));
    }
    let (k, _) = codebook.nearest(sub);
    Ok((k, codebook.codeword(k)))
}

/// Quantizes every sub-vector of `features` with its assigned codebook.
pub fn quantize_features(
    features: &[f64],
    assignment: &[usize],
    bank: &CodebookBank,
) -> Result<Vec<usize>> {
    if features.len() != bank.feature_len() {
        return Err(Error::DimensionMismatch(format!(
            "feature length {} differs from bank N*D={}",
            features.len(),
            bank.feature_len()
        )));
    }
    bank.check_assignment(assignment)?;
    Ok(features
        .chunks_exact(bank.dim())
        .zip(assignment)
        .map(|(sub, &v)| bank.codebook(v).nearest(sub).0)
        .collect())
}

/// Fixed-width big-endian binary representation of `k`.
pub fn index_to_bits(k: usize, bits: u32) -> Result<Vec<u8>> {
    if bits as usize >= usize::BITS as usize || k >> bits != 0 {
        return Err(Error::IndexOutOfRange { index: k, bits });
    }
    Ok((0..bits).rev().map(|s| ((k >> s) & 1) as u8).collect())
}

/// Inverse of [`index_to_bits`].
pub fn bits_to_index(bits: &[u8]) -> Result<usize> {
    if bits.is_empty() || bits.len() >= usize::BITS as usize {
        return Err(Error::BitLength {
            got: bits.len(),
            expected: 1,
        });
    }
    bits.iter().try_fold(0usize, |acc, &b| match b {
        0 | 1 => Ok((acc << 1) | b as usize),
        other => Err(Error::InvalidBit(other)),
    })
}

/// Concatenates the codewords addressed by each received bit string.
pub fn reconstruct(
    bits_per_sub: &[Vec<u8>],
    assignment: &[usize],
    bank: &CodebookBank,
) -> Result<Vec<f64>> {
    if bits_per_sub.len() != bank.n_sub() {
        return Err(Error::DimensionMismatch(format!(
            "got {} bit strings, bank has N={}",
            bits_per_sub.len(),
            bank.n_sub()
        )));
    }
    bank.check_assignment(assignment)?;
    let mut out = Vec::with_capacity(bank.feature_len());
    for (b, &v) in bits_per_sub.iter().zip(assignment) {
        if b.len() != bank.bits() as usize {
            return Err(Error::BitLength {
                got: b.len(),
                expected: bank.bits() as usize,
            });
        }
        out.extend_from_slice(bank.codebook(v).codeword(bits_to_index(b)?));
    }
    Ok(out)
}
