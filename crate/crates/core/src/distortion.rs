//! Expected end-to-end distortion of a sub-vector sent through parallel BSCs.
//!
//! A sub-vector `z` is quantized to its nearest codeword `k*`. The receiver
//! decodes codeword `k` with probability `p(c_k | c_k*)`, the product of
//! per-bit flip probabilities, so the expected squared error is
//!
//! ```text
//! D(z) = sum_k p(c_k | c_k*) * |c_k - z|^2
//! ```
//!
//! The sum runs over all `2^B` codewords; transition probabilities are
//! accumulated in log space before exponentiation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::channel::bsc::{check_mu_row, flip_pattern_probs};
use crate::error::{Error, Result};
use crate::vq::{squared_distance, Codebook, CodebookBank};

fn check_inputs(sub: &[f64], codebook: &Codebook, mu: &[f64]) -> Result<()> {
    if sub.len() != codebook.dim() {
        return Err(Error::DimensionMismatch(format!(
            "sub-vector has length {}, codebook dimension is {}",
            sub.len(),
            codebook.dim()
        )));
    }
    if mu.len() != codebook.bits() as usize {
        return Err(Error::BitLength {
            got: mu.len(),
            expected: codebook.bits() as usize,
        });
    }
    check_mu_row(mu)
}

/// Squared distance from `sub` to every codeword, plus the nearest index.
pub(crate) fn distances_and_nearest(sub: &[f64], codebook: &Codebook) -> (Vec<f64>, usize) {
    let mut best = (0usize, f64::INFINITY);
    let dist: Vec<f64> = codebook
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let d = squared_distance(sub, c);
            if d < best.1 {
                best = (k, d);
            }
            d
        })
        .collect();
    (dist, best.0)
}

/// `sum_k P[k ^ k*] * dist[k]` for a precomputed flip-pattern table `P`.
#[inline]
pub(crate) fn expected_from_parts(dist: &[f64], nearest: usize, patterns: &[f64]) -> f64 {
    dist.iter()
        .enumerate()
        .map(|(k, d)| patterns[k ^ nearest] * d)
        .sum()
}

/// Expected squared error of `sub` under `codebook` and per-bit flip
/// probabilities `mu`.
pub fn expected_distortion(sub: &[f64], codebook: &Codebook, mu: &[f64]) -> Result<f64> {
    check_inputs(sub, codebook, mu)?;
    let (dist, nearest) = distances_and_nearest(sub, codebook);
    Ok(expected_from_parts(&dist, nearest, &flip_pattern_probs(mu)))
}

/// Gradient of [`expected_distortion`] with respect to each `mu[j]`,
/// holding the encoder fixed.
///
/// `dD/dmu_j = sum_k p(c_k | c_k*) * (H_j / mu_j - (1 - H_j) / (1 - mu_j)) * |c_k - z|^2`
/// where `H_j` is 1 when codewords `k` and `k*` differ in bit `j`.
pub fn distortion_grad_mu(sub: &[f64], codebook: &Codebook, mu: &[f64]) -> Result<Vec<f64>> {
    check_inputs(sub, codebook, mu)?;
    if let Some(bad) = mu.iter().find(|&&m| m <= 0.0 || m >= 1.0) {
        return Err(Error::InvalidProbability(format!(
            "gradient needs every flip probability strictly inside (0, 1), got {bad}"
        )));
    }
    let (dist, nearest) = distances_and_nearest(sub, codebook);
    Ok(grad_from_parts(&dist, nearest, mu, &flip_pattern_probs(mu)))
}

pub(crate) fn grad_from_parts(dist: &[f64], nearest: usize, mu: &[f64], patterns: &[f64]) -> Vec<f64> {
    let b = mu.len();
    let mut grad = vec![0.0; b];
    for (k, d) in dist.iter().enumerate() {
        let x = k ^ nearest;
        let w = patterns[x] * d;
        for (j, g) in grad.iter_mut().enumerate() {
            if x & (1 << (b - 1 - j)) != 0 {
                *g += w / mu[j];
            } else {
                *g -= w / (1.0 - mu[j]);
            }
        }
    }
    grad
}

/// `V x N` table of dataset-averaged expected distortions, entry `(v, i)`
/// using codebook `v` with row `i` of its profile.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionTable {
    n_books: usize,
    n_sub: usize,
    values: Vec<f64>,
    dataset_size: Option<usize>,
}

impl DistortionTable {
    /// Builds a table from `V` rows of `N` entries, each finite and nonnegative.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_books = rows.len();
        let n_sub = rows.first().map_or(0, |r| r.len());
        if n_books == 0 || n_sub == 0 || rows.iter().any(|r| r.len() != n_sub) {
            return Err(Error::DimensionMismatch(
                "distortion table needs V >= 1 rows of equal length N >= 1".into(),
            ));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(bad) = values.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::Format(format!("table entry {bad} is not a finite nonnegative value")));
        }
        Ok(DistortionTable {
            n_books,
            n_sub,
            values,
            dataset_size: None,
        })
    }

    pub fn n_books(&self) -> usize {
        self.n_books
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    /// Number of feature vectors averaged, when known (not stored in CSV).
    pub fn dataset_size(&self) -> Option<usize> {
        self.dataset_size
    }

    #[inline]
    pub fn get(&self, v: usize, i: usize) -> f64 {
        self.values[v * self.n_sub + i]
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.values[v * self.n_sub..(v + 1) * self.n_sub]
    }

    /// `sum_i D(v_i, i)` for an assignment.
    pub fn total(&self, assignment: &[usize]) -> f64 {
        assignment.iter().enumerate().map(|(i, &v)| self.get(v, i)).sum()
    }

    pub(crate) fn check_bank(&self, bank: &CodebookBank) -> Result<()> {
        if self.n_books != bank.len() || self.n_sub != bank.n_sub() {
            return Err(Error::DimensionMismatch(format!(
                "table is {}x{}, bank has V={} and N={}",
                self.n_books,
                self.n_sub,
                bank.len(),
                bank.n_sub()
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,i,value\n");
        for v in 0..self.n_books {
            for i in 0..self.n_sub {
                writeln!(out, "{v},{i},{:.16e}", self.get(v, i)).unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "v,i,value" => {}
            other => {
                return Err(Error::Format(format!(
                    "distortion CSV must start with 'v,i,value', found {other:?}"
                )))
            }
        }
        let mut cells = Vec::new();
        for (n, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Format(format!("distortion CSV row {}: '{line}'", n + 2));
            if parts.len() != 3 {
                return Err(bad());
            }
            let v: usize = parts[0].parse().map_err(|_| bad())?;
            let i: usize = parts[1].parse().map_err(|_| bad())?;
            let x: f64 = parts[2].parse().map_err(|_| bad())?;
            cells.push((v, i, x));
        }
        let n_books = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
        let n_sub = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
        if cells.len() != n_books * n_sub {
            return Err(Error::Format(format!(
                "distortion CSV has {} rows, expected {n_books} x {n_sub}",
                cells.len()
            )));
        }
        let mut rows = vec![vec![f64::NAN; n_sub]; n_books];
        for (v, i, x) in cells {
            if !rows[v][i].is_nan() {
                return Err(Error::Format(format!("duplicate cell ({v}, {i})")));
            }
            rows[v][i] = x;
        }
        Self::new(rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

/// Dataset average of [`expected_distortion`] for every `(v, i)` cell.
/// Cells are computed in parallel; each cell sums in dataset order, so the
/// result does not depend on the thread count.
pub fn build_table<F: AsRef<[f64]> + Sync>(dataset: &[F], bank: &CodebookBank) -> Result<DistortionTable> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let len = bank.feature_len();
    if let Some((n, f)) = dataset.iter().enumerate().find(|(_, f)| f.as_ref().len() != len) {
        return Err(Error::DimensionMismatch(format!(
            "feature vector {n} has length {}, bank expects N*D = {len}",
            f.as_ref().len()
        )));
    }
    let (n_sub, dim) = (bank.n_sub(), bank.dim());
    let values: Vec<f64> = (0..bank.len() * n_sub)
        .into_par_iter()
        .map(|cell| {
            let (v, i) = (cell / n_sub, cell % n_sub);
            let codebook = bank.codebook(v);
            let patterns = flip_pattern_probs(bank.profile(v).row(i));
            let sum: f64 = dataset
                .iter()
                .map(|f| {
                    let sub = &f.as_ref()[i * dim..(i + 1) * dim];
                    let (dist, nearest) = distances_and_nearest(sub, codebook);
                    expected_from_parts(&dist, nearest, &patterns)
                })
                .sum();
            sum / dataset.len() as f64
        })
        .collect();
    Ok(DistortionTable {
        n_books: bank.len(),
        n_sub,
        values,
        dataset_size: Some(dataset.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::bsc_transition_prob;
    use crate::rng::rng_from_seed;
    use crate::vq::{index_to_bits, BitFlipProfile};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_codebook(rng: &mut impl Rng, dim: usize, bits: u32) -> Codebook {
        Codebook::from_flat(dim, bits, (0..dim << bits).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn scalar_hand_example() {
        let cb = Codebook::new(1, 1, vec![vec![0.0], vec![1.0]]).unwrap();
        let d = expected_distortion(&[0.2], &cb, &[0.1]).unwrap();
        assert_relative_eq!(d, 0.1, max_relative = 1e-14);
        // B = 1: the gradient is the distance gap between the two codewords
        let g = distortion_grad_mu(&[0.2], &cb, &[0.1]).unwrap();
        assert_relative_eq!(g[0], 0.64 - 0.04, max_relative = 1e-12);
    }

    #[test]
    fn noiseless_and_uniform_limits() {
        let mut rng = rng_from_seed(1);
        let cb = random_codebook(&mut rng, 3, 4);
        let z = [0.3, -0.7, 1.1];
        let (k, c) = crate::vq::quantize(&z, &cb).unwrap();
        assert_eq!(expected_distortion(&z, &cb, &[0.0; 4]).unwrap(), squared_distance(&z, c));
        let mean: f64 = cb.iter().map(|c| squared_distance(&z, c)).sum::<f64>() / 16.0;
        assert_relative_eq!(expected_distortion(&z, &cb, &[0.5; 4]).unwrap(), mean, max_relative = 1e-12);
        assert!(k < 16);
        assert!(distortion_grad_mu(&z, &cb, &[0.0, 0.1, 0.1, 0.1]).is_err());
        assert!(expected_distortion(&z[..2], &cb, &[0.1; 4]).is_err());
    }

    #[test]
    fn matches_transition_prob_oracle() {
        let mut rng = rng_from_seed(5);
        let cb = random_codebook(&mut rng, 2, 3);
        let mu = [0.03, 0.2, 0.11];
        let z = [0.4, -0.1];
        let (k, _) = crate::vq::quantize(&z, &cb).unwrap();
        let a = index_to_bits(k, 3).unwrap();
        let oracle: f64 = (0..8)
            .map(|q| {
                bsc_transition_prob(&a, &index_to_bits(q, 3).unwrap(), &mu).unwrap()
                    * squared_distance(cb.codeword(q), &z)
            })
            .sum();
        assert_relative_eq!(expected_distortion(&z, &cb, &mu).unwrap(), oracle, max_relative = 1e-13);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = rng_from_seed(11);
        for _ in 0..20 {
            let cb = random_codebook(&mut rng, 4, 5);
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mu: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..0.4)).collect();
            let g = distortion_grad_mu(&z, &cb, &mu).unwrap();
            for j in 0..5 {
                let h = 1e-6;
                let (mut up, mut dn) = (mu.clone(), mu.clone());
                up[j] += h;
                dn[j] -= h;
                let fd = (expected_distortion(&z, &cb, &up).unwrap()
                    - expected_distortion(&z, &cb, &dn).unwrap())
                    / (2.0 * h);
                assert!((g[j] - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "j={j} g={} fd={fd}", g[j]);
            }
        }
    }

    #[test]
    fn symmetric_center_has_zero_gradient() {
        // the origin is equidistant from all four corners of the square
        let cb = Codebook::new(2, 2, vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]])
            .unwrap();
        let g = distortion_grad_mu(&[0.0, 0.0], &cb, &[0.2, 0.3]).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-14));
    }

    fn small_bank(rng: &mut impl Rng) -> CodebookBank {
        let cbs = vec![random_codebook(rng, 2, 3), random_codebook(rng, 2, 3)];
        let profiles = vec![
            BitFlipProfile::from_flat(2, 3, (0..6).map(|_| rng.random_range(0.01..0.05)).collect(), 0.01).unwrap(),
            BitFlipProfile::from_flat(2, 3, (0..6).map(|_| rng.random_range(0.1..0.3)).collect(), 0.1).unwrap(),
        ];
        CodebookBank::new(cbs, profiles, vec![0.1, 0.2]).unwrap()
    }

    #[test]
    fn table_matches_direct_loop() {
        let mut rng = rng_from_seed(3);
        let bank = small_bank(&mut rng);
        let data: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let table = build_table(&data, &bank).unwrap();
        assert_eq!(table.dataset_size(), Some(3));
        for v in 0..2 {
            for i in 0..2 {
                let mut acc = 0.0;
                for z in &data {
                    let sub = &z[2 * i..2 * i + 2];
                    let (k, _) = crate::vq::quantize(sub, bank.codebook(v)).unwrap();
                    let a = index_to_bits(k, 3).unwrap();
                    for q in 0..8 {
                        let p = bsc_transition_prob(&a, &index_to_bits(q, 3).unwrap(), bank.profile(v).row(i)).unwrap();
                        acc += p * squared_distance(bank.codebook(v).codeword(q), sub);
                    }
                }
                assert!((table.get(v, i) - acc / 3.0).abs() <= 1e-12);
            }
        }
        let single = build_table(&data[..1], &bank).unwrap();
        let doubled = build_table(&[data[0].clone(), data[0].clone()], &bank).unwrap();
        assert_eq!(single.row(0), doubled.row(0));
        assert_relative_eq!(
            single.get(1, 0),
            expected_distortion(&data[0][..2], bank.codebook(1), bank.profile(1).row(0)).unwrap()
        );
        assert!(build_table::<Vec<f64>>(&[], &bank).is_err());
        assert!(build_table(&[vec![0.0; 3]], &bank).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = rng_from_seed(8);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random::<f64>() / 7.0).collect()).collect();
        let table = DistortionTable::new(rows).unwrap();
        let text = table.to_csv();
        assert!(text.starts_with("v,i,value\n0,0,"));
        assert_eq!(DistortionTable::from_csv(&text).unwrap(), table);
        assert!(DistortionTable::from_csv("v,i,value\n0,0,1\n0,0,2\n").is_err());
        assert!(DistortionTable::from_csv("a,b\n").is_err());
        assert!(DistortionTable::new(vec![vec![-1.0]]).is_err());
    }
}
