//! Channel-optimized Lloyd training of a multi-codebook bank.
//!
//! With the encoder fixed to nearest-codeword assignment, the training set at
//! position `i` is summarized per cell `k` by a count `n[k]`, a vector sum
//! `s[k]` and the total energy `q`. Writing `P_i` for the flip-pattern
//! distribution of profile row `i` and `*` for XOR convolution over indices,
//!
//! ```text
//! sum_z D(z) = sum_k |c_k|^2 (P_i * n)[k] - 2 c_k . (P_i * s)[k] + q
//! ```
//!
//! so both the objective and the centroid update `c_k = (P*s)[k] / (P*n)[k]`
//! come from a Walsh-Hadamard transform in `O(B 2^B D)` per position. The
//! spectrum of a product distribution is `prod_j (1 - 2 mu_j)` over the set
//! bits of the frequency.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::bsc::flip_pattern_probs;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::vq::{BitFlipProfile, Codebook, CodebookBank};

/// Floors of the five-codebook bank used in the reference experiments.
pub const DEFAULT_MU_MIN: [f64; 5] = [0.0005, 0.001, 0.0045, 0.02, 0.05];

/// `lambda_v = 2^v / 8` for 0-based `v`.
pub fn default_lambda(count: usize) -> Vec<f64> {
    (0..count).map(|v| 2f64.powi(v as i32) / 8.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Binary splitting from the global mean; codeword `k` splits into
    /// `2k` and `2k + 1`, so index bits follow the split tree.
    Splitting,
    /// `2^B` training sub-vectors drawn at random.
    RandomSample,
}

impl FromStr for Init {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "splitting" => Ok(Init::Splitting),
            "random-sample" | "random" => Ok(Init::RandomSample),
            _ => Err(Error::Config(format!("unknown init '{s}' (splitting | random-sample)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileMode {
    /// Seeded log-spaced ramp, never updated.
    Fixed,
    /// Ramp start, then projected-gradient refinement after every Lloyd step.
    Refined,
}

impl FromStr for ProfileMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(ProfileMode::Fixed),
            "refined" => Ok(ProfileMode::Refined),
            _ => Err(Error::Config(format!("unknown profile mode '{s}' (fixed | refined)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_books: usize,
    pub dim: usize,
    pub bits: u32,
    pub n_sub: usize,
    pub mu_min: Vec<f64>,
    pub lambda: Vec<f64>,
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    pub init: Init,
    pub profile_mode: ProfileMode,
    pub seed: u64,
    /// Largest per-entry move of one refinement step.
    pub refine_step: f64,
    /// Refinement steps after each Lloyd step.
    pub refine_iters: usize,
    /// Lloyd passes per level of the splitting initializer.
    pub split_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_books: 5,
            dim: 4,
            bits: 9,
            n_sub: 128,
            mu_min: DEFAULT_MU_MIN.to_vec(),
            lambda: default_lambda(5),
            max_iters: 30,
            tol: 1e-4,
            init: Init::Splitting,
            profile_mode: ProfileMode::Fixed,
            seed: 0,
            refine_step: 0.02,
            refine_iters: 5,
            split_iters: 6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_books == 0 {
            return bad("V must be at least 1".into());
        }
        if self.dim == 0 || self.n_sub == 0 || !(1..=16).contains(&self.bits) {
            return bad(format!(
                "need D >= 1, N >= 1 and 1 <= B <= 16 (got D={}, N={}, B={})",
                self.dim, self.n_sub, self.bits
            ));
        }
        if self.mu_min.len() != self.n_books || self.lambda.len() != self.n_books {
            return bad(format!(
                "mu_min and lambda need V = {} entries (got {} and {})",
                self.n_books,
                self.mu_min.len(),
                self.lambda.len()
            ));
        }
        if self.mu_min.iter().any(|&m| !(m > 0.0 && m < 0.5)) {
            return bad("mu_min entries must lie in (0, 0.5)".into());
        }
        if self.mu_min.windows(2).any(|w| w[0] >= w[1]) {
            return bad("mu_min list must be strictly increasing".into());
        }
        if self.lambda.windows(2).any(|w| w[0] >= w[1]) || self.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("lambda list must be non-negative and strictly increasing".into());
        }
        if !(self.tol > 0.0) {
            return bad("convergence tolerance must be positive".into());
        }
        if !(self.refine_step > 0.0 && self.refine_step <= 0.5) {
            return bad("refine_step must lie in (0, 0.5]".into());
        }
        Ok(())
    }
}

/// `(1 / NB) sum mu ln mu`, minimized at `mu = 1/e`.
pub fn regularizer(mu: &[f64]) -> Result<f64> {
    if mu.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(bad) = mu.iter().find(|&&m| !(m > 0.0 && m < 1.0)) {
        return Err(Error::InvalidProbability(format!(
            "regularizer needs entries in (0, 1), got {bad}"
        )));
    }
    Ok(mu.iter().map(|m| m * m.ln()).sum::<f64>() / mu.len() as f64)
}

/// Fixed profile: each row is a log-spaced ramp over
/// `[mu_min, min(4 mu_min, 0.5)]`, shuffled across bit positions.
pub fn fixed_profile(n_sub: usize, bits: u32, mu_min: f64, seed: u64) -> Result<BitFlipProfile> {
    let b = bits as usize;
    let top = (4.0 * mu_min).min(0.5);
    let ramp: Vec<f64> = (0..b)
        .map(|j| {
            if b == 1 {
                mu_min
            } else {
                (mu_min * (top / mu_min).powf(j as f64 / (b - 1) as f64)).clamp(mu_min, top)
            }
        })
        .collect();
    let mut rng = rng_from_seed(seed);
    let mut mu = Vec::with_capacity(n_sub * b);
    for _ in 0..n_sub {
        let mut row = ramp.clone();
        row.shuffle(&mut rng);
        mu.extend(row);
    }
    BitFlipProfile::from_flat(n_sub, bits, mu, mu_min)
}

// ---------------------------------------------------------------------------
// Walsh-Hadamard helpers

/// In-place unnormalized transform over `len / width` rows of `width` values.
fn wht(buf: &mut [f64], width: usize) {
    let rows = buf.len() / width;
    let mut h = 1;
    while h < rows {
        for start in (0..rows).step_by(2 * h) {
            for x in start..start + h {
                let (lo, hi) = buf.split_at_mut((x + h) * width);
                let a = &mut lo[x * width..(x + 1) * width];
                let b = &mut hi[..width];
                for (u, v) in a.iter_mut().zip(b.iter_mut()) {
                    let (s, d) = (*u + *v, *u - *v);
                    *u = s;
                    *v = d;
                }
            }
        }
        h *= 2;
    }
}

/// Transform of the flip-pattern distribution of `mu`.
fn flip_spectrum(mu: &[f64]) -> Vec<f64> {
    let b = mu.len();
    let mut out = vec![1.0; 1 << b];
    for (j, &m) in mu.iter().enumerate() {
        let mask = 1usize << (b - 1 - j);
        let f = 1.0 - 2.0 * m;
        for (w, o) in out.iter_mut().enumerate() {
            if w & mask != 0 {
                *o *= f;
            }
        }
    }
    out
}

/// `buf <- P * buf` for the flip distribution of `mu`.
fn xor_smooth(mu: &[f64], buf: &mut [f64], width: usize) {
    let spec = flip_spectrum(mu);
    let scale = 1.0 / spec.len() as f64;
    wht(buf, width);
    for (row, s) in buf.chunks_exact_mut(width).zip(&spec) {
        row.iter_mut().for_each(|x| *x *= s * scale);
    }
    wht(buf, width);
}

// ---------------------------------------------------------------------------
// Cell statistics

/// Per-position cell statistics of a dataset under one codebook.
#[derive(Debug, Clone)]
pub(crate) struct CellStats {
    cells: usize,
    dim: usize,
    samples: usize,
    /// Per position: `cells` rows of `[n, s_0 .. s_{D-1}]`.
    moments: Vec<Vec<f64>>,
    energy: Vec<f64>,
    /// Squared distance to the nearest codeword, indexed `[i][sample]`.
    errors: Vec<Vec<f64>>,
}

pub(crate) fn encode_stats(codebook: &Codebook, data: &Dataset) -> CellStats {
    let (cells, dim) = (codebook.len(), codebook.dim());
    let per_pos: Vec<(Vec<f64>, f64, Vec<f64>)> = (0..data.n_sub())
        .into_par_iter()
        .map(|i| {
            let mut mom = vec![0.0; cells * (dim + 1)];
            let mut energy = 0.0;
            let mut errs = Vec::with_capacity(data.len());
            for s in 0..data.len() {
                let z = data.sub(s, i);
                let (k, d) = codebook.nearest(z);
                let row = &mut mom[k * (dim + 1)..(k + 1) * (dim + 1)];
                row[0] += 1.0;
                row[1..].iter_mut().zip(z).for_each(|(a, x)| *a += x);
                energy += z.iter().map(|x| x * x).sum::<f64>();
                errs.push(d);
            }
            (mom, energy, errs)
        })
        .collect();
    let mut stats = CellStats {
        cells,
        dim,
        samples: data.len(),
        moments: Vec::with_capacity(per_pos.len()),
        energy: Vec::with_capacity(per_pos.len()),
        errors: Vec::with_capacity(per_pos.len()),
    };
    for (m, e, r) in per_pos {
        stats.moments.push(m);
        stats.energy.push(e);
        stats.errors.push(r);
    }
    stats
}

impl CellStats {
    fn smoothed(&self, i: usize, mu_row: &[f64]) -> Vec<f64> {
        let mut buf = self.moments[i].clone();
        xor_smooth(mu_row, &mut buf, self.dim + 1);
        buf
    }

    /// Mean expected distortion over samples and positions.
    fn objective(&self, codebook: &Codebook, mu: &[f64]) -> f64 {
        let b = mu.len() / self.moments.len();
        let w = self.dim + 1;
        let total: f64 = (0..self.moments.len())
            .into_par_iter()
            .map(|i| {
                let sm = self.smoothed(i, &mu[i * b..(i + 1) * b]);
                let mut acc = self.energy[i];
                for (k, c) in codebook.iter().enumerate() {
                    let row = &sm[k * w..(k + 1) * w];
                    let cc: f64 = c.iter().map(|x| x * x).sum();
                    let cs: f64 = c.iter().zip(&row[1..]).map(|(x, y)| x * y).sum();
                    acc += cc * row[0] - 2.0 * cs;
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        total / (self.samples * self.moments.len()) as f64
    }

    /// Per position, `G[x] = sum over samples z of |c_{k(z) ^ x} - z|^2`,
    /// so that the position's distortion sum is `sum_x P[x] G[x]`.
    fn pattern_costs(&self, codebook: &Codebook) -> Vec<Vec<f64>> {
        let (cells, dim) = (self.cells, self.dim);
        let mut hc = Vec::with_capacity(cells * (dim + 1));
        for c in codebook.iter() {
            hc.push(c.iter().map(|x| x * x).sum::<f64>());
            hc.extend_from_slice(c);
        }
        wht(&mut hc, dim + 1);
        (0..self.moments.len())
            .into_par_iter()
            .map(|i| {
                let mut hm = self.moments[i].clone();
                wht(&mut hm, dim + 1);
                let mut g: Vec<f64> = hm
                    .chunks_exact(dim + 1)
                    .zip(hc.chunks_exact(dim + 1))
                    .map(|(m, c)| {
                        m[0] * c[0] - 2.0 * m[1..].iter().zip(&c[1..]).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                wht(&mut g, 1);
                let scale = 1.0 / cells as f64;
                g.iter_mut().for_each(|x| *x = *x * scale + self.energy[i]);
                g
            })
            .collect()
    }
}

/// Weight below which a codeword counts as unused, relative to the sample count.
const DEAD_WEIGHT: f64 = 1e-12;

/// Centroid update for a fixed encoder. Returns the new codeword matrix and
/// the indices whose weight vanished.
fn centroids(stats: &CellStats, codebook: &Codebook, mu: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let (cells, dim) = (stats.cells, stats.dim);
    let w = dim + 1;
    let b = mu.len() / stats.moments.len();
    let parts: Vec<Vec<f64>> = (0..stats.moments.len())
        .into_par_iter()
        .map(|i| stats.smoothed(i, &mu[i * b..(i + 1) * b]))
        .collect();
    let mut acc = vec![0.0; cells * w];
    for p in &parts {
        acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
    }
    let floor = DEAD_WEIGHT * (stats.samples * stats.moments.len()) as f64;
    let mut out = codebook.as_flat().to_vec();
    let mut dead = Vec::new();
    for k in 0..cells {
        let row = &acc[k * w..(k + 1) * w];
        if row[0] <= floor {
            dead.push(k);
        } else {
            for d in 0..dim {
                out[k * dim + d] = row[1 + d] / row[0];
            }
        }
    }
    (out, dead)
}

/// Moves each dead codeword onto a distinct training sub-vector, largest
/// quantization error first (ties to the lowest sample, then position).
fn reseed(flat: &mut [f64], dead: &[usize], stats: &CellStats, data: &Dataset) {
    if dead.is_empty() {
        return;
    }
    let dim = stats.dim;
    let mut cands: Vec<(f64, usize, usize)> = stats
        .errors
        .iter()
        .enumerate()
        .flat_map(|(i, errs)| errs.iter().enumerate().map(move |(s, &e)| (e, s, i)))
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (&k, &(_, s, i)) in dead.iter().zip(&cands) {
        flat[k * dim..(k + 1) * dim].copy_from_slice(data.sub(s, i));
    }
}

fn check_mu(mu: &[f64], codebook: &Codebook, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has D={}, codebook has D={}",
            data.dim(),
            codebook.dim()
        )));
    }
    let need = data.n_sub() * codebook.bits() as usize;
    if mu.len() != need {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} entries, need N*B = {need}",
            mu.len()
        )));
    }
    if let Some(bad) = mu.iter().find(|&&m| !(0.0..=0.5).contains(&m)) {
        return Err(Error::InvalidProbability(format!("flip probability {bad} outside [0, 0.5]")));
    }
    Ok(())
}

/// One unguarded centroid update: the minimizer of the empirical expected
/// distortion for the current nearest-codeword partition, with dead
/// codewords re-seeded. `mu` holds `N` rows of `B` entries in `[0, 0.5]`.
pub fn centroid_step(codebook: &Codebook, mu: &[f64], data: &Dataset) -> Result<Codebook> {
    check_mu(mu, codebook, data)?;
    let stats = encode_stats(codebook, data);
    let (mut flat, dead) = centroids(&stats, codebook, mu);
    reseed(&mut flat, &dead, &stats, data);
    Codebook::from_flat(codebook.dim(), codebook.bits(), flat)
}

/// Mean expected distortion of `data` under `codebook` and profile `mu`.
pub fn mean_distortion(codebook: &Codebook, mu: &[f64], data: &Dataset) -> Result<f64> {
    check_mu(mu, codebook, data)?;
    Ok(encode_stats(codebook, data).objective(codebook, mu))
}

#[derive(Debug, Clone)]
pub struct LloydStep {
    pub codebook: Codebook,
    pub objective_before: f64,
    pub objective: f64,
    /// Accepted step length along the centroid update; `0` means no move.
    pub step: f64,
    pub reseeded: usize,
}

/// Smallest damping factor tried before giving up on a step.
const MIN_STEP: f64 = 1.0 / 256.0;

fn guarded_step(
    codebook: &Codebook,
    mu: &[f64],
    data: &Dataset,
    stats: &CellStats,
    before: f64,
) -> Result<(LloydStep, CellStats)> {
    let (mut target, dead) = centroids(stats, codebook, mu);
    reseed(&mut target, &dead, stats, data);
    let old = codebook.as_flat();
    let mut alpha = 1.0;
    while alpha >= MIN_STEP {
        let flat: Vec<f64> = old.iter().zip(&target).map(|(o, t)| o + alpha * (t - o)).collect();
        let cand = Codebook::from_flat(codebook.dim(), codebook.bits(), flat)?;
        let cand_stats = encode_stats(&cand, data);
        let obj = cand_stats.objective(&cand, mu);
        if obj <= before {
            let step = LloydStep {
                codebook: cand,
                objective_before: before,
                objective: obj,
                step: alpha,
                reseeded: dead.len(),
            };
            return Ok((step, cand_stats));
        }
        alpha *= 0.5;
    }
    let step = LloydStep {
        codebook: codebook.clone(),
        objective_before: before,
        objective: before,
        step: 0.0,
        reseeded: 0,
    };
    Ok((step, stats.clone()))
}

/// Encoder step, centroid step, then re-encoding. The move toward the new
/// centroids is halved until the re-encoded objective does not increase, so
/// the objective is non-increasing.
pub fn lloyd_step(codebook: &Codebook, mu: &[f64], data: &Dataset) -> Result<LloydStep> {
    check_mu(mu, codebook, data)?;
    let stats = encode_stats(codebook, data);
    let before = stats.objective(codebook, mu);
    Ok(guarded_step(codebook, mu, data, &stats, before)?.0)
}

// ---------------------------------------------------------------------------
// Profile refinement

/// Mean distortion and its gradient in `mu`, from per-position pattern costs.
fn distortion_and_grad(costs: &[Vec<f64>], mu: &[f64], samples: usize) -> (f64, Vec<f64>) {
    let n = costs.len();
    let b = mu.len() / n;
    let scale = 1.0 / (n * samples) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; mu.len()];
    for (i, g) in costs.iter().enumerate() {
        let row = &mu[i * b..(i + 1) * b];
        let probs = flip_pattern_probs(row);
        let mut pos = vec![0.0; b];
        let mut neg = vec![0.0; b];
        for (x, (&p, &c)) in probs.iter().zip(g).enumerate() {
            let pc = p * c;
            total += pc;
            for j in 0..b {
                if x & (1 << (b - 1 - j)) != 0 {
                    pos[j] += pc;
                } else {
                    neg[j] += pc;
                }
            }
        }
        for j in 0..b {
            grad[i * b + j] = (pos[j] / row[j] - neg[j] / (1.0 - row[j])) * scale;
        }
    }
    (total * scale, grad)
}

fn refine_objective(costs: &[Vec<f64>], mu: &[f64], lambda: f64, samples: usize) -> (f64, Vec<f64>) {
    let (d, mut g) = distortion_and_grad(costs, mu, samples);
    let nb = mu.len() as f64;
    let reg: f64 = mu.iter().map(|m| m * m.ln()).sum::<f64>() / nb;
    g.iter_mut()
        .zip(mu)
        .for_each(|(gi, m)| *gi += lambda * (m.ln() + 1.0) / nb);
    (d + lambda * reg, g)
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub profile: BitFlipProfile,
    /// Objective before the first step and after every accepted step.
    pub trace: Vec<f64>,
}

fn refine_with(
    stats: &CellStats,
    codebook: &Codebook,
    profile: &BitFlipProfile,
    lambda: f64,
    mu_min: f64,
    step_size: f64,
    iters: usize,
) -> Result<Refinement> {
    let costs = stats.pattern_costs(codebook);
    let mut mu: Vec<f64> = profile.as_flat().iter().map(|m| m.clamp(mu_min, 0.5)).collect();
    let (mut obj, mut grad) = refine_objective(&costs, &mu, lambda, stats.samples);
    let mut trace = vec![obj];
    let mut eta = step_size;
    for _ in 0..iters {
        let free = |m: f64, g: f64| !((m <= mu_min && g > 0.0) || (m >= 0.5 && g < 0.0));
        let gmax = mu
            .iter()
            .zip(&grad)
            .filter(|(m, g)| free(**m, **g))
            .fold(0.0f64, |a, (_, g)| a.max(g.abs()));
        if gmax == 0.0 {
            break;
        }
        let mut accepted = false;
        while eta >= step_size * 1e-9 {
            let cand: Vec<f64> = mu
                .iter()
                .zip(&grad)
                .map(|(m, g)| (m - eta * g / gmax).clamp(mu_min, 0.5))
                .collect();
            let (c_obj, c_grad) = refine_objective(&costs, &cand, lambda, stats.samples);
            if c_obj <= obj {
                (mu, obj, grad) = (cand, c_obj, c_grad);
                trace.push(obj);
                eta = (eta * 2.0).min(step_size);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(Refinement {
        profile: BitFlipProfile::from_flat(profile.n_sub(), profile.bits(), mu, mu_min)?,
        trace,
    })
}

/// Projected gradient descent on mean expected distortion plus
/// `lambda * regularizer`, with entries clipped to `[mu_min, 0.5]`. Each
/// step moves the largest free entry by at most `step_size`; the step is
/// halved until the objective does not increase.
pub fn refine_profile(
    codebook: &Codebook,
    profile: &BitFlipProfile,
    data: &Dataset,
    lambda: f64,
    mu_min: f64,
    step_size: f64,
    iters: usize,
) -> Result<Refinement> {
    check_mu(profile.as_flat(), codebook, data)?;
    if !(mu_min > 0.0 && mu_min < 0.5) || !(step_size > 0.0) || !(lambda >= 0.0) {
        return Err(Error::Config(format!(
            "refinement needs mu_min in (0, 0.5), positive step and lambda >= 0 (got {mu_min}, {step_size}, {lambda})"
        )));
    }
    let stats = encode_stats(codebook, data);
    refine_with(&stats, codebook, profile, lambda, mu_min, step_size, iters)
}

// ---------------------------------------------------------------------------
// Initialization

fn pooled_kmeans(centers: &mut [f64], data: &Dataset, iters: usize) -> Result<()> {
    let dim = data.dim();
    let pool = data.as_flat();
    let count = pool.len() / dim;
    let k = centers.len() / dim;
    for _ in 0..iters {
        let cb = Codebook::from_flat(dim, k.trailing_zeros(), centers.to_vec())?;
        let assign: Vec<(usize, f64)> = pool
            .par_chunks(dim * 4096)
            .flat_map_iter(|chunk| chunk.chunks_exact(dim).map(|z| cb.nearest(z)).collect::<Vec<_>>())
            .collect();
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &(c, _)) in assign.iter().enumerate() {
            counts[c] += 1;
            let z = &pool[p * dim..(p + 1) * dim];
            sums[c * dim..(c + 1) * dim].iter_mut().zip(z).for_each(|(a, x)| *a += x);
        }
        let mut far: Vec<usize> = (0..count).collect();
        far.sort_by(|&a, &b| assign[b].1.total_cmp(&assign[a].1).then(a.cmp(&b)));
        let mut far = far.into_iter();
        for c in 0..k {
            let dst = &mut centers[c * dim..(c + 1) * dim];
            if counts[c] > 0 {
                dst.iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                    .for_each(|(d, s)| *d = s / counts[c] as f64);
            } else if let Some(p) = far.next() {
                dst.copy_from_slice(&pool[p * dim..(p + 1) * dim]);
            }
        }
    }
    Ok(())
}

fn splitting_init(data: &Dataset, bits: u32, iters: usize, seed: u64) -> Result<Codebook> {
    let dim = data.dim();
    let pool = data.as_flat();
    let count = (pool.len() / dim) as f64;
    let mut mean = vec![0.0; dim];
    for z in pool.chunks_exact(dim) {
        mean.iter_mut().zip(z).for_each(|(m, x)| *m += x / count);
    }
    let mut spread = vec![0.0; dim];
    for z in pool.chunks_exact(dim) {
        spread.iter_mut().zip(z).zip(&mean).for_each(|((s, x), m)| *s += (x - m).powi(2) / count);
    }
    let mut rng = rng_from_seed(seed);
    let mut centers = mean;
    for _ in 0..bits {
        let mut next = Vec::with_capacity(centers.len() * 2);
        for c in centers.chunks_exact(dim) {
            let delta: Vec<f64> = spread
                .iter()
                .map(|v| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    sign * 1e-2 * (v.sqrt() + 1e-9)
                })
                .collect();
            next.extend(c.iter().zip(&delta).map(|(x, d)| x - d));
            next.extend(c.iter().zip(&delta).map(|(x, d)| x + d));
        }
        centers = next;
        pooled_kmeans(&mut centers, data, iters)?;
    }
    Codebook::from_flat(dim, bits, centers)
}

fn sample_init(data: &Dataset, bits: u32, seed: u64) -> Result<Codebook> {
    let dim = data.dim();
    let pool = data.as_flat();
    let count = pool.len() / dim;
    let k = 1usize << bits;
    let mut rng = rng_from_seed(seed);
    let picks: Vec<usize> = if count >= k {
        index::sample(&mut rng, count, k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..count)).collect()
    };
    let flat = picks.iter().flat_map(|&p| pool[p * dim..(p + 1) * dim].iter().copied()).collect();
    Codebook::from_flat(dim, bits, flat)
}

// ---------------------------------------------------------------------------
// Sequential training

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub stage: usize,
    pub iteration: usize,
    pub objective: f64,
}

/// Per-iteration objective. With fixed profiles the objective is the mean
/// expected distortion; with refined profiles it also carries
/// `lambda * regularizer`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn stage(&self, v: usize) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.stage == v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,iteration,objective\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.16e}", r.stage, r.iteration, r.objective);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub bank: CodebookBank,
    pub log: TrainLog,
}

/// Trains codebooks `0..V` in turn. Stage `v` starts from codebook `v - 1`,
/// iterates guarded Lloyd steps (and profile refinement if enabled) until
/// the relative decrease drops below `tol`, then gives every earlier
/// codebook one more Lloyd step under its own profile.
pub fn train_sequential(data: &Dataset, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.n_sub() != config.n_sub || data.dim() != config.dim {
        return Err(Error::DimensionMismatch(format!(
            "dataset has N={}, D={} but the config expects N={}, D={}",
            data.n_sub(),
            data.dim(),
            config.n_sub,
            config.dim
        )));
    }
    let init_seed = derive_seed(config.seed, &[0xC0DE]);
    let mut current = match config.init {
        Init::Splitting => splitting_init(data, config.bits, config.split_iters, init_seed)?,
        Init::RandomSample => sample_init(data, config.bits, init_seed)?,
    };
    let mut codebooks: Vec<Codebook> = Vec::with_capacity(config.n_books);
    let mut profiles: Vec<BitFlipProfile> = Vec::with_capacity(config.n_books);
    let mut log = TrainLog::default();
    for v in 0..config.n_books {
        let (mu_min, lambda) = (config.mu_min[v], config.lambda[v]);
        let mut profile = fixed_profile(config.n_sub, config.bits, mu_min, derive_seed(config.seed, &[v as u64]))?;
        let refined = config.profile_mode == ProfileMode::Refined;
        let penalty = |p: &BitFlipProfile| -> Result<f64> {
            Ok(if refined { lambda * regularizer(p.as_flat())? } else { 0.0 })
        };
        let mut stats = encode_stats(&current, data);
        let mut dist = stats.objective(&current, profile.as_flat());
        let mut obj = dist + penalty(&profile)?;
        log.rows.push(LogRow { stage: v, iteration: 0, objective: obj });
        for it in 1..=config.max_iters {
            let (step, new_stats) = guarded_step(&current, profile.as_flat(), data, &stats, dist)?;
            current = step.codebook;
            stats = new_stats;
            dist = step.objective;
            let mut next = dist + penalty(&profile)?;
            if refined {
                let r = refine_with(&stats, &current, &profile, lambda, mu_min, config.refine_step, config.refine_iters)?;
                let r_dist = stats.objective(&current, r.profile.as_flat());
                let r_next = r_dist + penalty(&r.profile)?;
                // The two objective evaluations round differently; keep the
                // refinement only if it also helps in this one.
                if r_next <= next {
                    (profile, dist, next) = (r.profile, r_dist, r_next);
                }
            }
            log.rows.push(LogRow { stage: v, iteration: it, objective: next });
            let done = (obj - next) <= config.tol * obj.abs().max(f64::MIN_POSITIVE) || step.step == 0.0 && !refined;
            obj = next;
            if done {
                break;
            }
        }
        for u in 0..v {
            codebooks[u] = lloyd_step(&codebooks[u], profiles[u].as_flat(), data)?.codebook;
        }
        codebooks.push(current.clone());
        profiles.push(profile);
    }
    let bank = CodebookBank::new(codebooks, profiles, config.lambda.clone())?;
    Ok(Trained { bank, log })
}

#[cfg(test)]
mod tests;
