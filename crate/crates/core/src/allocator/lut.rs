//! Plans precomputed over a quantized instantaneous-SNR grid.
//!
//! The instantaneous SNR is `10 log10(P_tot * gamma / (N * B))` dB. It is
//! clipped to `[snr_lo_db, snr_hi_db]` and quantized uniformly into `2^bits`
//! cells, each holding the plan computed at the cell center. Plans depend on
//! `P_tot` and `gamma` only through their product, up to a linear power
//! scale, so one table serves every budget.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Allocator, LinkBudget, Method, TempModMatrix, TransmissionPlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
    pub bits: u32,
    pub method: Method,
    /// Budget the stored powers refer to.
    pub p_tot: f64,
    /// `N * B`, the bit count used in the SNR definition.
    pub total_bits: usize,
    pub entries: Vec<TransmissionPlan>,
}

fn check_grid(lo: f64, hi: f64, bits: u32) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!("SNR range [{lo}, {hi}] dB is empty")));
    }
    if !(1..=16).contains(&bits) {
        return Err(Error::Config(format!("LUT resolution must be 1..=16 bits, got {bits}")));
    }
    Ok(())
}

impl LookupTable {
    pub fn cells(&self) -> usize {
        self.entries.len()
    }

    fn step(&self) -> f64 {
        (self.snr_hi_db - self.snr_lo_db) / self.entries.len() as f64
    }

    /// Center of cell `c` in dB.
    pub fn cell_center_db(&self, c: usize) -> f64 {
        self.snr_lo_db + (c as f64 + 0.5) * self.step()
    }

    /// Cell holding `snr_db` after clipping.
    pub fn cell_of(&self, snr_db: f64) -> usize {
        let x = snr_db.clamp(self.snr_lo_db, self.snr_hi_db);
        let c = ((x - self.snr_lo_db) / self.step()).floor();
        (c.max(0.0) as usize).min(self.entries.len() - 1)
    }

    /// Plan for budget `p_tot` and gain `gamma`, with powers rescaled from
    /// the stored budget. Below the table's range the BER targets cannot be
    /// met, so the plan is marked `scaled`.
    pub fn plan_for(&self, p_tot: f64, gamma: f64) -> TransmissionPlan {
        let snr = 10.0 * (p_tot * gamma / self.total_bits as f64).log10();
        let mut plan = self.entries[self.cell_of(snr)].clone();
        plan.scale_powers(p_tot / self.p_tot);
        plan.scaled |= snr < self.snr_lo_db;
        plan
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lut: LookupTable = serde_json::from_str(text)?;
        check_grid(lut.snr_lo_db, lut.snr_hi_db, lut.bits)?;
        if lut.entries.len() != 1 << lut.bits {
            return Err(Error::Format(format!(
                "lookup table with {} bits needs {} entries, found {}",
                lut.bits,
                1usize << lut.bits,
                lut.entries.len()
            )));
        }
        Ok(lut)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Instantaneous-SNR range between the points where the all-`(V-1)` and the
/// all-`0` assignments become feasible at order `R`.
pub fn lut_range(alloc: &Allocator<'_>, budget: &LinkBudget) -> Result<(f64, f64)> {
    let bank = alloc.bank();
    let (n, b) = (bank.n_sub(), bank.bits() as usize);
    let m_hat = TempModMatrix::uniform(n, b, budget.rate);
    let snr = |v: usize| 10.0 * (alloc.unit_power(&vec![v; n], &m_hat) / (n * b) as f64).log10();
    let (lo, hi) = (snr(bank.len() - 1), snr(0));
    if !(lo < hi) {
        return Err(Error::Config(format!(
            "bank profiles give an empty SNR range [{lo}, {hi}] dB"
        )));
    }
    Ok((lo, hi))
}

/// Plans for every cell of a `2^bits` grid over `[snr_lo_db, snr_hi_db]`.
pub fn build_lut(
    alloc: &Allocator<'_>,
    budget: &LinkBudget,
    snr_lo_db: f64,
    snr_hi_db: f64,
    bits: u32,
    method: Method,
) -> Result<LookupTable> {
    check_grid(snr_lo_db, snr_hi_db, bits)?;
    budget.validate()?;
    let total_bits = alloc.bank().total_bits();
    let mut lut = LookupTable {
        snr_lo_db,
        snr_hi_db,
        bits,
        method,
        p_tot: budget.p_tot,
        total_bits,
        entries: Vec::new(),
    };
    let cells = 1usize << bits;
    let centers: Vec<f64> = (0..cells)
        .map(|c| snr_lo_db + (c as f64 + 0.5) * (snr_hi_db - snr_lo_db) / cells as f64)
        .collect();
    lut.entries = centers
        .par_iter()
        .map(|&snr| {
            let gamma = 10f64.powf(snr / 10.0) * total_bits as f64 / budget.p_tot;
            alloc.plan(method, gamma, budget)
        })
        .collect::<Result<_>>()?;
    Ok(lut)
}

/// Stored plan for gain `gamma` at the table's own budget.
pub fn lut_plan(lut: &LookupTable, gamma: f64) -> TransmissionPlan {
    lut.plan_for(lut.p_tot, gamma)
}
