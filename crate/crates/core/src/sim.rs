//! End-to-end link simulation, SNR sweeps and link metrics.
//!
//! Noise power is fixed at `sigma2 = 1` and the channel is normalized so that
//! `E[gamma] = 1`; a normalized SNR of `s` dB therefore means a budget of
//! `P_tot = N * B * 10^(s / 10)`. Rayleigh coefficients are drawn once per
//! feature vector, so all symbols of one vector share a fade.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{build_lut, lut_range, LookupTable};
use crate::allocator::{Allocator, LinkBudget, Method, TransmissionPlan};
use crate::channel::{ber_approx, draw_channel_with, ChannelModel, ChannelState, Modem, ModOrder};
use crate::dataset::Dataset;
use crate::distortion::{build_table, DistortionTable};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::vq::{squared_distance, CodebookBank};

// ---------------------------------------------------------------------------
// Metrics

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

/// Normalized SNR `10 log10(P_tot E[gamma] / (N B))` in dB.
pub fn snr_db(p_tot: f64, mean_gamma: f64, n_sub: usize, bits: u32) -> Result<f64> {
    positive("P_tot", p_tot)?;
    positive("E[gamma]", mean_gamma)?;
    positive("N * B", (n_sub * bits as usize) as f64)?;
    Ok(10.0 * (p_tot * mean_gamma / (n_sub * bits as usize) as f64).log10())
}

/// Budget giving normalized SNR `snr_db` for `total_bits = N * B`.
pub fn p_tot_for_snr(snr_db: f64, mean_gamma: f64, total_bits: usize) -> Result<f64> {
    positive("E[gamma]", mean_gamma)?;
    if !snr_db.is_finite() || total_bits == 0 {
        return Err(Error::Config(format!("invalid SNR {snr_db} dB or bit count {total_bits}")));
    }
    Ok(total_bits as f64 * 10f64.powf(snr_db / 10.0) / mean_gamma)
}

/// Bits per source byte: `bits / (C H W 8)`.
pub fn compression_ratio(bits: usize, channels: usize, height: usize, width: usize) -> Result<f64> {
    if bits == 0 || channels == 0 || height == 0 || width == 0 {
        return Err(Error::Config("compression ratio needs positive arguments".into()));
    }
    Ok(bits as f64 / (channels * height * width * 8) as f64)
}

/// `10 log10(MAX^2 / MSE)` in dB.
pub fn psnr(max: f64, mse: f64) -> Result<f64> {
    positive("MAX", max)?;
    positive("MSE", mse)?;
    Ok(10.0 * (max * max / mse).log10())
}

// ---------------------------------------------------------------------------
// Symbol-level simulation

/// Sends `symbols` uniformly random `m`-bit labels at power `p` over `state`
/// and counts bit errors after coherent detection.
pub fn simulate_symbol_errors(m: ModOrder, p: f64, state: &ChannelState, symbols: u64, rng: &mut SimRng) -> u64 {
    let modem = Modem::new(m);
    let mask = (1u32 << m.bits()) - 1;
    let gain = state.h * p.sqrt();
    let mut errors = 0u64;
    for _ in 0..symbols {
        let label = rng.random::<u32>() & mask;
        let y = gain * modem.map(label) + state.noise(rng);
        errors += (modem.demap(y / gain) ^ label).count_ones() as u64;
    }
    errors
}

/// Monte Carlo BER of Gray `m`-QAM at received SNR `p * gamma` over AWGN.
pub fn simulate_qam_ber(m: ModOrder, snr: f64, bits: u64, seed: u64) -> Result<f64> {
    let state = ChannelState::from_gamma(snr)?;
    let symbols = bits.div_ceil(m.bits() as u64).max(1);
    let errors = simulate_symbol_errors(m, 1.0, &state, symbols, &mut rng_from_seed(seed));
    Ok(errors as f64 / (symbols * m.bits() as u64) as f64)
}

/// Empirical versus target BER of one symbol of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerCheck {
    pub symbol: usize,
    pub m: u32,
    pub p: f64,
    /// Group mean flip probability the power was matched to.
    pub target: f64,
    /// Approximate BER at the symbol's actual power.
    pub predicted: f64,
    pub bits: u64,
    pub errors: u64,
}

impl BerCheck {
    pub fn empirical(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }

    /// `|empirical - target| / target`.
    pub fn relative_error(&self) -> f64 {
        (self.empirical() - self.target).abs() / self.target
    }
}

/// Simulates every symbol of `plan` at gain `gamma` (AWGN, unit noise) with
/// at least `bits_per_symbol` bits each. Symbol `t` uses its own stream
/// derived from `(seed, t)`.
pub fn verify_ber(plan: &TransmissionPlan, gamma: f64, bits_per_symbol: u64, seed: u64) -> Result<Vec<BerCheck>> {
    let state = ChannelState::from_gamma(gamma)?;
    if bits_per_symbol == 0 {
        return Err(Error::Config("bits per symbol must be positive".into()));
    }
    plan.symbols
        .par_iter()
        .enumerate()
        .map(|(t, s)| {
            let mb = s.m.bits() as u64;
            let count = bits_per_symbol.div_ceil(mb);
            let mut rng = rng_from_seed(derive_seed(seed, &[t as u64]));
            let errors = simulate_symbol_errors(s.m, s.p, &state, count, &mut rng);
            Ok(BerCheck {
                symbol: t,
                m: s.m.bits(),
                p: s.p,
                target: s.mu_bar,
                predicted: ber_approx(s.p, s.m, gamma),
                bits: count * mb,
                errors,
            })
        })
        .collect()
}

pub fn ber_checks_to_csv(checks: &[BerCheck]) -> String {
    let mut out = String::from("symbol,m,p,target,predicted,bits,errors,empirical\n");
    for c in checks {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{},{},{:e}",
            c.symbol,
            c.m,
            c.p,
            c.target,
            c.predicted,
            c.bits,
            c.errors,
            c.empirical()
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Single transmissions

/// Where plans come from: an exact solver run per channel state, or a
/// precomputed lookup table.
#[derive(Debug, Clone, Copy)]
pub enum Planner<'a> {
    Exact(Method),
    Lut(&'a LookupTable),
}

impl Planner<'_> {
    pub fn plan(&self, alloc: &Allocator<'_>, gamma: f64, budget: &LinkBudget) -> Result<TransmissionPlan> {
        match self {
            Planner::Exact(m) => alloc.plan(*m, gamma, budget),
            Planner::Lut(lut) => Ok(lut.plan_for(budget.p_tot, gamma)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolErrors {
    pub m: u32,
    pub mu_bar: f64,
    pub bits: u32,
    pub errors: u32,
}

/// Outcome of sending one feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub gamma: f64,
    /// `sum_i |z_i - z_hat_i|^2` after the channel.
    pub mse: f64,
    /// `sum_i |z_i - z_q,i|^2`, the noiseless error.
    pub quantization_error: f64,
    /// `sum_i D_i(v_i)` from the distortion table.
    pub expected_distortion: f64,
    pub mean_codebook_index: f64,
    pub scaled: bool,
    pub symbols: Vec<SymbolErrors>,
}

/// Sends the index bits of `plan` through `state`. Returns the received
/// indices and per-symbol bit errors.
pub fn transmit(
    plan: &TransmissionPlan,
    indices: &[usize],
    bits: u32,
    state: &ChannelState,
    rng: &mut SimRng,
) -> (Vec<usize>, Vec<SymbolErrors>) {
    let mut received = indices.to_vec();
    let mut errs = Vec::with_capacity(plan.symbols.len());
    for s in &plan.symbols {
        let modem = Modem::new(s.m);
        let mut label = 0u32;
        for &(i, j) in &s.group {
            let bit = (indices[i] >> (bits - 1 - j as u32)) & 1;
            label = (label << 1) | bit as u32;
        }
        let gain = state.h * s.p.sqrt();
        let y = gain * modem.map(label) + state.noise(rng);
        let got = modem.demap(y / gain);
        let mb = s.m.bits();
        for (n, &(i, j)) in s.group.iter().enumerate() {
            let bit = ((got >> (mb - 1 - n as u32)) & 1) as usize;
            let mask = 1usize << (bits - 1 - j as u32);
            received[i] = (received[i] & !mask) | (bit * mask);
        }
        errs.push(SymbolErrors {
            m: mb,
            mu_bar: s.mu_bar,
            bits: mb,
            errors: (got ^ label).count_ones(),
        });
    }
    (received, errs)
}

/// Plans, quantizes, transmits and reconstructs one feature vector.
pub fn run_once(
    feature: &[f64],
    alloc: &Allocator<'_>,
    budget: &LinkBudget,
    state: &ChannelState,
    planner: Planner<'_>,
    seed: u64,
) -> Result<RunRecord> {
    let bank = alloc.bank();
    if feature.len() != bank.feature_len() {
        return Err(Error::DimensionMismatch(format!(
            "feature vector has length {}, bank expects N*D = {}",
            feature.len(),
            bank.feature_len()
        )));
    }
    let plan = planner.plan(alloc, state.gamma, budget)?;
    let dim = bank.dim();
    let subs: Vec<&[f64]> = feature.chunks_exact(dim).collect();
    let indices: Vec<usize> = subs
        .iter()
        .zip(&plan.assignment)
        .map(|(z, &v)| bank.codebook(v).nearest(z).0)
        .collect();
    let mut rng = rng_from_seed(seed);
    let (received, symbols) = transmit(&plan, &indices, bank.bits(), state, &mut rng);
    let mut mse = 0.0;
    let mut quant = 0.0;
    for (i, z) in subs.iter().enumerate() {
        let cb = bank.codebook(plan.assignment[i]);
        quant += squared_distance(z, cb.codeword(indices[i]));
        mse += squared_distance(z, cb.codeword(received[i]));
    }
    Ok(RunRecord {
        gamma: state.gamma,
        mse,
        quantization_error: quant,
        expected_distortion: plan.expected_distortion(alloc.table()),
        mean_codebook_index: plan.mean_codebook_index(),
        scaled: plan.scaled,
        symbols,
    })
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMethod {
    Jcamp,
    Jcap,
    Baseline,
    /// JCAMP plans read from a lookup table built for the sweep.
    Lut,
}

impl FromStr for SweepMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lut" => Ok(SweepMethod::Lut),
            other => Ok(match other.parse::<Method>()? {
                Method::Jcamp => SweepMethod::Jcamp,
                Method::Jcap => SweepMethod::Jcap,
                Method::Baseline => SweepMethod::Baseline,
            }),
        }
    }
}

impl fmt::Display for SweepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMethod::Jcamp => "jcamp",
            SweepMethod::Jcap => "jcap",
            SweepMethod::Baseline => "baseline",
            SweepMethod::Lut => "lut",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Normalized SNR grid in dB.
    pub snr_db: Vec<f64>,
    pub channel: ChannelModel,
    pub trials: usize,
    pub method: SweepMethod,
    pub seed: u64,
    pub rate: u32,
    pub m_max: u32,
    /// Resolution of the lookup table for `method = lut`.
    pub lut_bits: u32,
    pub bank: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            snr_db: vec![-2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            channel: ChannelModel::Rayleigh,
            trials: 200,
            method: SweepMethod::Jcamp,
            seed: 0,
            rate: 4,
            m_max: 6,
            lut_bits: 8,
            bank: None,
            table: None,
            dataset: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid must be a non-empty list of finite values".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials per point must be at least 1".into()));
        }
        LinkBudget::new(1.0, self.rate, self.m_max)?;
        Ok(())
    }
}

/// Decade bins of target BER, `[1e-6, 1e-5), ..., [0.1, 1)`; targets below
/// `1e-6` land in the first bin.
pub const BER_DECADES: [i32; 6] = [-6, -5, -4, -3, -2, -1];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BerBin {
    pub bits: u64,
    pub errors: u64,
    /// `sum target * bits`, so `target_sum / bits` is the bit-weighted target.
    pub target_sum: f64,
}

impl BerBin {
    pub fn empirical(&self) -> f64 {
        self.errors as f64 / self.bits as f64
    }

    pub fn target(&self) -> f64 {
        self.target_sum / self.bits as f64
    }
}

fn ber_bin(target: f64) -> usize {
    let d = target.log10().floor() as i32;
    (d.clamp(BER_DECADES[0], BER_DECADES[5]) - BER_DECADES[0]) as usize
}

/// Averages over the trials of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub snr_db: f64,
    pub p_tot: f64,
    pub trials: usize,
    pub mse: f64,
    pub quantization_error: f64,
    pub expected_distortion: f64,
    pub mean_codebook_index: f64,
    pub scaled_fraction: f64,
    /// Expected distortion averaged over trials whose plan was not scaled.
    pub expected_distortion_unscaled: Option<f64>,
    /// Bit errors of unscaled plans, by target decade.
    pub ber: [BerBin; 6],
}

impl PointRecord {
    /// Averages `records` in order.
    pub fn from_records(snr_db: f64, p_tot: f64, records: &[RunRecord]) -> Self {
        let n = records.len() as f64;
        let mean = |f: fn(&RunRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        let unscaled: Vec<&RunRecord> = records.iter().filter(|r| !r.scaled).collect();
        let mut ber = [BerBin::default(); 6];
        for r in &unscaled {
            for s in &r.symbols {
                let b = &mut ber[ber_bin(s.mu_bar)];
                b.bits += s.bits as u64;
                b.errors += s.errors as u64;
                b.target_sum += s.mu_bar * s.bits as f64;
            }
        }
        PointRecord {
            snr_db,
            p_tot,
            trials: records.len(),
            mse: mean(|r| r.mse),
            quantization_error: mean(|r| r.quantization_error),
            expected_distortion: mean(|r| r.expected_distortion),
            mean_codebook_index: mean(|r| r.mean_codebook_index),
            scaled_fraction: (records.len() - unscaled.len()) as f64 / n,
            expected_distortion_unscaled: (!unscaled.is_empty())
                .then(|| unscaled.iter().map(|r| r.expected_distortion).sum::<f64>() / unscaled.len() as f64),
            ber,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub points: Vec<PointRecord>,
}

impl SweepReport {
    /// Long-format CSV: `point,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,metric,value\n");
        for (k, p) in self.points.iter().enumerate() {
            let mut row = |name: &str, value: String| {
                let _ = writeln!(out, "{k},{name},{value}");
            };
            row("snr_db", p.snr_db.to_string());
            row("p_tot", p.p_tot.to_string());
            row("trials", p.trials.to_string());
            row("mse", p.mse.to_string());
            row("quantization_error", p.quantization_error.to_string());
            row("expected_distortion", p.expected_distortion.to_string());
            if let Some(d) = p.expected_distortion_unscaled {
                row("expected_distortion_unscaled", d.to_string());
            }
            row("mean_codebook_index", p.mean_codebook_index.to_string());
            row("scaled_fraction", p.scaled_fraction.to_string());
            for (b, bin) in p.ber.iter().enumerate() {
                if bin.bits > 0 {
                    let tag = format!("1e{}", BER_DECADES[b]);
                    row(&format!("ber_target_{tag}"), bin.target().to_string());
                    row(&format!("ber_empirical_{tag}"), bin.empirical().to_string());
                    row(&format!("ber_bits_{tag}"), bin.bits.to_string());
                }
            }
        }
        out
    }

    /// Writes `<path>` (CSV) and `<path>.json` with the full config.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv())?;
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        fs::write(side, serde_json::to_string_pretty(&self.config)?)?;
        Ok(())
    }
}

/// Runs a sweep on loaded inputs. Trial `t` at point `k` draws its channel,
/// feature vector and noise from the stream `(seed, k, t)`, so methods run
/// with the same seed see identical channels and features.
pub fn run_sweep(data: &Dataset, alloc: &Allocator<'_>, config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    data.check_bank(alloc.bank())?;
    let total_bits = alloc.bank().total_bits();
    let base = LinkBudget::new(p_tot_for_snr(config.snr_db[0], 1.0, total_bits)?, config.rate, config.m_max)?;
    let lut = match config.method {
        SweepMethod::Lut => {
            let (lo, hi) = lut_range(alloc, &base)?;
            Some(build_lut(alloc, &base, lo, hi, config.lut_bits, Method::Jcamp)?)
        }
        _ => None,
    };
    let planner = match (config.method, &lut) {
        (SweepMethod::Jcamp, _) => Planner::Exact(Method::Jcamp),
        (SweepMethod::Jcap, _) => Planner::Exact(Method::Jcap),
        (SweepMethod::Baseline, _) => Planner::Exact(Method::Baseline),
        (SweepMethod::Lut, Some(l)) => Planner::Lut(l),
        (SweepMethod::Lut, None) => unreachable!("table built above"),
    };
    let mut points = Vec::with_capacity(config.snr_db.len());
    for (k, &snr) in config.snr_db.iter().enumerate() {
        let budget = base.with_p_tot(p_tot_for_snr(snr, 1.0, total_bits)?);
        let records: Vec<RunRecord> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed(config.seed, &[k as u64, t as u64]));
                let state = draw_channel_with(config.channel, 1.0, &mut rng)?;
                let feature = data.feature(rng.random_range(0..data.len()));
                run_once(feature, alloc, &budget, &state, planner, rng.random())
            })
            .collect::<Result<_>>()?;
        points.push(PointRecord::from_records(snr, budget.p_tot, &records));
    }
    Ok(SweepReport {
        config: config.clone(),
        points,
    })
}

/// Loads the bank, dataset and (optional) table named in `config` and runs
/// the sweep. Without a table path the table is built from the dataset.
pub fn sweep(config: &SweepConfig) -> Result<SweepReport> {
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone().ok_or_else(|| Error::Config(format!("sweep needs a {what} path")))
    };
    let bank = CodebookBank::load(need(&config.bank, "bank")?)?;
    let data = Dataset::load(need(&config.dataset, "dataset")?)?;
    data.check_bank(&bank)?;
    let table = match &config.table {
        Some(p) => DistortionTable::load(p)?,
        None => {
            let rows: Vec<&[f64]> = data.iter().collect();
            build_table(&rows, &bank)?
        }
    };
    let alloc = Allocator::new(&bank, &table, config.m_max)?;
    run_sweep(&data, &alloc, config)
}
