//! Codebook assignment, modulation and power allocation.
//!
//! Every bit `(i, j)` of the `N x B` index stream must arrive with the flip
//! probability its codebook was trained for. Inside the solvers each bit gets
//! a temporary order `m_hat` and the per-bit temporary power
//! `ber_inverse(mu; m_hat) / m_hat`; the plan is feasible while these sum to
//! at most `P_tot`. Three solvers share the same post-processing:
//!
//! * [`jcamp`] alternates greedy codebook downgrades (P1) with order swaps
//!   that reduce temporary power (P2);
//! * [`jcap`] runs the greedy with every order fixed at the rate `R`;
//! * [`codebook_selection_baseline`] uses a single codebook for every
//!   sub-vector.
//!
//! Post-processing sorts bits by flip probability, groups equal-order bits
//! into symbols, matches each symbol's power to the group's mean flip
//! probability and spreads the leftover budget evenly.
//!
//! Inverse powers depend on `p` and `gamma` only through their product, so an
//! [`Allocator`] caches them once per bank at unit gain and the greedy
//! decisions depend only on `P_tot * gamma`.

mod lut;

pub use lut::{build_lut, lut_plan, lut_range, LookupTable};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ber::{ber_ceiling, inverse_at_unit_gain, ModOrder};
use crate::distortion::DistortionTable;
use crate::error::{Error, Result};
use crate::vq::CodebookBank;

/// Power budget and rate constraint for one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub p_tot: f64,
    /// Average bits per symbol, `R = N * B / T`.
    pub rate: u32,
    pub m_max: u32,
}

impl LinkBudget {
    pub fn new(p_tot: f64, rate: u32, m_max: u32) -> Result<Self> {
        let budget = LinkBudget { p_tot, rate, m_max };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_tot > 0.0) || !self.p_tot.is_finite() {
            return Err(Error::Config(format!("total power must be positive, got {}", self.p_tot)));
        }
        ModOrder::new(self.rate)?;
        ModOrder::new(self.m_max)?;
        if self.m_max < self.rate {
            return Err(Error::Config(format!(
                "maximum order {} is below the rate {}",
                self.m_max, self.rate
            )));
        }
        Ok(())
    }

    /// Symbol count `T` for `total_bits` bits.
    pub fn symbols(&self, total_bits: usize) -> Result<usize> {
        if total_bits % self.rate as usize != 0 {
            return Err(Error::Config(format!(
                "N*B = {total_bits} is not divisible by the rate {}",
                self.rate
            )));
        }
        Ok(total_bits / self.rate as usize)
    }

    pub fn with_p_tot(self, p_tot: f64) -> Self {
        LinkBudget { p_tot, ..self }
    }
}

/// Which solver produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Jcamp,
    Jcap,
    Baseline,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jcamp" => Ok(Method::Jcamp),
            "jcap" => Ok(Method::Jcap),
            "baseline" => Ok(Method::Baseline),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected jcamp, jcap or baseline)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Jcamp => "jcamp",
            Method::Jcap => "jcap",
            Method::Baseline => "baseline",
        })
    }
}

/// Temporary per-bit modulation orders, `N x B`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TempModMatrix {
    n_sub: usize,
    bits: usize,
    orders: Vec<u32>,
}

impl TempModMatrix {
    pub fn uniform(n_sub: usize, bits: usize, m: u32) -> Self {
        TempModMatrix {
            n_sub,
            bits,
            orders: vec![m; n_sub * bits],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self> {
        let n_sub = rows.len();
        let bits = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != bits) {
            return Err(Error::DimensionMismatch("order rows must share length B".into()));
        }
        let orders: Vec<u32> = rows.into_iter().flatten().collect();
        for &m in &orders {
            ModOrder::new(m)?;
        }
        Ok(TempModMatrix { n_sub, bits, orders })
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.orders[i * self.bits + j]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.orders
    }

    /// Number of bits currently at order `m`.
    pub fn count(&self, m: u32) -> usize {
        self.orders.iter().filter(|&&o| o == m).count()
    }

    /// Mean order, `(1 / NB) * sum m_hat`.
    pub fn mean_order(&self) -> f64 {
        self.orders.iter().map(|&m| m as f64).sum::<f64>() / self.orders.len() as f64
    }
}

/// One transmitted QAM symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolRecord {
    /// Bits per symbol.
    pub m: ModOrder,
    /// Transmit power.
    pub p: f64,
    /// Bit coordinates `(sub-vector, bit position)` carried, most significant first.
    pub group: Vec<(usize, usize)>,
    /// Mean target flip probability of the group.
    pub mu_bar: f64,
}

/// Allocator output for one feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionPlan {
    /// Codebook index per sub-vector.
    pub assignment: Vec<usize>,
    pub symbols: Vec<SymbolRecord>,
    /// True when the powers were scaled to fit the budget, so BER matching
    /// does not hold.
    pub scaled: bool,
}

impl TransmissionPlan {
    pub fn total_power(&self) -> f64 {
        self.symbols.iter().map(|s| s.p).sum()
    }

    pub fn total_bits(&self) -> usize {
        self.symbols.iter().map(|s| s.m.bits() as usize).sum()
    }

    /// `sum_i D(v_i, i)`.
    pub fn expected_distortion(&self, table: &DistortionTable) -> f64 {
        table.total(&self.assignment)
    }

    pub fn mean_codebook_index(&self) -> f64 {
        self.assignment.iter().sum::<usize>() as f64 / self.assignment.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Multiplies every symbol power by `factor`.
    pub fn scale_powers(&mut self, factor: f64) {
        self.symbols.iter_mut().for_each(|s| s.p *= factor);
    }

    /// Checks the structural invariants: the groups partition all `N x B`
    /// coordinates, group sizes equal their orders, there are
    /// `T = N * B / R` symbols, and powers sum to `P_tot` within `rel_tol`.
    pub fn check(&self, n_sub: usize, bits: usize, budget: &LinkBudget, rel_tol: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("plan invariant violated: {msg}")));
        if self.assignment.len() != n_sub {
            return fail(format!("assignment length {} != N = {n_sub}", self.assignment.len()));
        }
        let t = budget.symbols(n_sub * bits)?;
        if self.symbols.len() != t {
            return fail(format!("{} symbols, expected T = {t}", self.symbols.len()));
        }
        let mut seen = vec![false; n_sub * bits];
        for (t, s) in self.symbols.iter().enumerate() {
            if s.group.len() != s.m.bits() as usize {
                return fail(format!("symbol {t} carries {} bits at order {}", s.group.len(), s.m));
            }
            if s.m.bits() > budget.m_max {
                return fail(format!("symbol {t} exceeds m_max"));
            }
            if s.p < 0.0 && !self.scaled {
                return fail(format!("symbol {t} has negative power {}", s.p));
            }
            for &(i, j) in &s.group {
                if i >= n_sub || j >= bits || std::mem::replace(&mut seen[i * bits + j], true) {
                    return fail(format!("bit ({i}, {j}) is out of range or repeated"));
                }
            }
        }
        if self.total_bits() != n_sub * bits {
            return fail(format!("{} bits grouped, expected {}", self.total_bits(), n_sub * bits));
        }
        let total = self.total_power();
        if (total - budget.p_tot).abs() > rel_tol * budget.p_tot {
            return fail(format!("powers sum to {total}, budget is {}", budget.p_tot));
        }
        Ok(())
    }
}

/// Per-bit temporary power `ber_inverse(mu; m, gamma) / m`.
pub fn temp_power(mu: f64, m: ModOrder, gamma: f64) -> Result<f64> {
    if !(mu > 0.0 && mu <= 0.5) {
        return Err(Error::InvalidProbability(format!("temporary power needs mu in (0, 0.5], got {mu}")));
    }
    Ok(crate::channel::ber_inverse(mu, m, gamma)? / m.bits() as f64)
}

/// Unit-gain inverse that maps targets at or above the order's ceiling to
/// zero power (only reachable for `m >= 8`, whose ceiling is below 0.5).
fn inverse_or_zero(target: f64, m: ModOrder) -> Result<f64> {
    if target >= ber_ceiling(m) {
        Ok(0.0)
    } else {
        inverse_at_unit_gain(target, m)
    }
}

/// Allocation engine for one bank and distortion table, with unit-gain
/// inverse powers cached for every `(v, i, j, m)` with `m <= m_max`.
#[derive(Debug, Clone)]
pub struct Allocator<'a> {
    bank: &'a CodebookBank,
    table: &'a DistortionTable,
    m_max: u32,
    n_orders: usize,
    inv: Vec<f64>,
}

impl<'a> Allocator<'a> {
    pub fn new(bank: &'a CodebookBank, table: &'a DistortionTable, m_max: u32) -> Result<Self> {
        ModOrder::new(m_max)?;
        table.check_bank(bank)?;
        let n_orders = (m_max / 2) as usize;
        let mut inv = Vec::with_capacity(bank.len() * bank.total_bits() * n_orders);
        for v in 0..bank.len() {
            for &mu in bank.profile(v).as_flat() {
                for o in 0..n_orders {
                    inv.push(inverse_or_zero(mu, ModOrder::new(2 * (o as u32 + 1))?)?);
                }
            }
        }
        Ok(Allocator {
            bank,
            table,
            m_max,
            n_orders,
            inv,
        })
    }

    pub fn bank(&self) -> &CodebookBank {
        self.bank
    }

    pub fn table(&self) -> &DistortionTable {
        self.table
    }

    pub fn m_max(&self) -> u32 {
        self.m_max
    }

    /// Unit-gain `ber_inverse(mu^(v)_{i,j}; m)`.
    #[inline]
    fn inv(&self, v: usize, i: usize, j: usize, m: u32) -> f64 {
        let bit = i * self.bank.bits() as usize + j;
        self.inv[(v * self.bank.total_bits() + bit) * self.n_orders + (m / 2 - 1) as usize]
    }

    #[inline]
    fn mu(&self, v: usize, i: usize, j: usize) -> f64 {
        self.bank.profile(v).get(i, j)
    }

    /// Unit-gain temporary power of sub-vector `i` under codebook `v`.
    fn row_power(&self, v: usize, i: usize, m_hat: &TempModMatrix) -> f64 {
        (0..m_hat.bits)
            .map(|j| {
                let m = m_hat.get(i, j);
                self.inv(v, i, j, m) / m as f64
            })
            .sum()
    }

    /// Total temporary power `sum_{i,j} ber_inverse(mu; m_hat) / m_hat` at gain `gamma`.
    pub fn temp_power_total(&self, assignment: &[usize], m_hat: &TempModMatrix, gamma: f64) -> f64 {
        self.unit_power(assignment, m_hat) / gamma
    }

    fn unit_power(&self, assignment: &[usize], m_hat: &TempModMatrix) -> f64 {
        assignment
            .iter()
            .enumerate()
            .map(|(i, &v)| self.row_power(v, i, m_hat))
            .sum()
    }

    fn check_state(&self, assignment: &[usize], m_hat: &TempModMatrix) -> Result<()> {
        self.bank.check_assignment(assignment)?;
        if m_hat.n_sub != self.bank.n_sub() || m_hat.bits != self.bank.bits() as usize {
            return Err(Error::DimensionMismatch("order matrix does not match the bank".into()));
        }
        if let Some(&m) = m_hat.orders.iter().find(|&&m| m > self.m_max || m < 2 || m % 2 == 1) {
            return Err(Error::InvalidModOrder(m));
        }
        Ok(())
    }

    /// Downgrade ratio for sub-vector `i`: distortion drop over unit-gain
    /// power increase when moving from codebook `v_i` to `v_i - 1`.
    fn ratio(&self, i: usize, v: usize, m_hat: &TempModMatrix) -> f64 {
        let drop = self.table.get(v, i) - self.table.get(v - 1, i);
        let cost = self.row_power(v - 1, i, m_hat) - self.row_power(v, i, m_hat);
        let r = drop / cost;
        if r.is_nan() {
            f64::NEG_INFINITY
        } else {
            r
        }
    }

    /// P1 selection: the sub-vector whose downgrade buys the most distortion
    /// per unit of extra power. Ties go to the smallest index.
    pub fn p1_select(&self, assignment: &[usize], m_hat: &TempModMatrix) -> Result<usize> {
        self.check_state(assignment, m_hat)?;
        let ratios: Vec<Option<f64>> = assignment
            .iter()
            .enumerate()
            .map(|(i, &v)| (v > 0).then(|| self.ratio(i, v, m_hat)))
            .collect();
        argmax(&ratios).ok_or(Error::NoCandidate)
    }

    /// P2 order swaps for a fixed assignment. For each `m` in
    /// `4..=m_max - 2`, repeatedly moves the `m + 2` order-`m` bits that are
    /// cheapest to raise up one level and the `m - 2` remaining order-`m`
    /// bits that save the most when lowered down one level, while that strictly
    /// reduces the total temporary power. Symbol count is preserved.
    pub fn p2_swap(&self, m_hat: &mut TempModMatrix, assignment: &[usize]) -> Result<()> {
        self.check_state(assignment, m_hat)?;
        self.p2_swap_unchecked(m_hat, assignment, self.m_max);
        Ok(())
    }

    fn p2_swap_unchecked(&self, m_hat: &mut TempModMatrix, assignment: &[usize], m_max: u32) {
        let bits = m_hat.bits;
        let mut m = 4;
        while m + 2 <= m_max {
            let (up, down) = ((m + 2) as usize, (m - 2) as usize);
            loop {
                // (delta, flat index) for every bit at order m, flat index breaks ties
                let mut plus = Vec::new();
                let mut minus = Vec::new();
                for (flat, &o) in m_hat.orders.iter().enumerate() {
                    if o != m {
                        continue;
                    }
                    let (i, j) = (flat / bits, flat % bits);
                    let here = self.inv(assignment[i], i, j, m) / m as f64;
                    let above = self.inv(assignment[i], i, j, m + 2) / (m + 2) as f64;
                    let below = self.inv(assignment[i], i, j, m - 2) / (m - 2) as f64;
                    plus.push((above - here, flat));
                    minus.push((here - below, flat));
                }
                if plus.len() < up + down {
                    break;
                }
                plus.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let raise: Vec<usize> = plus[..up].iter().map(|&(_, f)| f).collect();
                minus.retain(|(_, f)| !raise.contains(f));
                minus.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let gain: f64 = plus[..up].iter().map(|p| p.0).sum();
                let saving: f64 = minus[..down].iter().map(|p| p.0).sum();
                if gain < saving {
                    raise.iter().for_each(|&f| m_hat.orders[f] = m + 2);
                    minus[..down].iter().for_each(|&(_, f)| m_hat.orders[f] = m - 2);
                } else {
                    break;
                }
            }
            m += 2;
        }
    }

    fn check_budget(&self, budget: &LinkBudget, gamma: f64) -> Result<usize> {
        budget.validate()?;
        if budget.m_max > self.m_max {
            return Err(Error::Config(format!(
                "budget m_max {} exceeds the allocator's cached maximum {}",
                budget.m_max, self.m_max
            )));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        budget.symbols(self.bank.total_bits())
    }

    /// Joint codebook assignment, adaptive modulation and power allocation.
    pub fn jcamp(&self, gamma: f64, budget: &LinkBudget) -> Result<TransmissionPlan> {
        self.check_budget(budget, gamma)?;
        let (n, b) = (self.bank.n_sub(), self.bank.bits() as usize);
        let cap = budget.p_tot * gamma;
        let mut v = vec![self.bank.len() - 1; n];
        let mut m_hat = TempModMatrix::uniform(n, b, budget.rate);
        if self.unit_power(&v, &m_hat) > cap {
            return self.finish(&v, &m_hat, gamma, budget, true);
        }
        let mut state = Greedy::new(self, v.clone(), &m_hat);
        let mut buffer = m_hat.clone();
        let mut last = None;
        let mut exhausted = false;
        'outer: while state.feasible(cap) {
            while state.feasible(cap) {
                buffer = m_hat.clone();
                match state.select() {
                    Some(i) => {
                        state.downgrade(i, &m_hat);
                        last = Some(i);
                    }
                    None => {
                        exhausted = true;
                        break 'outer;
                    }
                }
            }
            m_hat = buffer.clone();
            self.p2_swap_unchecked(&mut m_hat, &state.v, budget.m_max);
            state.refresh(&m_hat);
        }
        v = state.v;
        if !exhausted {
            if let Some(i) = last {
                v[i] += 1;
            }
            m_hat = buffer;
        }
        self.finish(&v, &m_hat, gamma, budget, false)
    }

    /// Greedy codebook assignment with every order fixed at `R`.
    pub fn jcap(&self, gamma: f64, budget: &LinkBudget) -> Result<TransmissionPlan> {
        self.check_budget(budget, gamma)?;
        let (n, b) = (self.bank.n_sub(), self.bank.bits() as usize);
        let cap = budget.p_tot * gamma;
        let m_hat = TempModMatrix::uniform(n, b, budget.rate);
        let v = vec![self.bank.len() - 1; n];
        if self.unit_power(&v, &m_hat) > cap {
            return self.finish(&v, &m_hat, gamma, budget, true);
        }
        let mut state = Greedy::new(self, v, &m_hat);
        while let Some(i) = state.select() {
            state.downgrade(i, &m_hat);
            if !state.feasible(cap) {
                state.upgrade(i, &m_hat);
                break;
            }
        }
        self.finish(&state.v, &m_hat, gamma, budget, false)
    }

    /// Smallest single codebook index that is feasible for every sub-vector
    /// at order `R`; falls back to `V - 1` with scaled powers.
    pub fn baseline(&self, gamma: f64, budget: &LinkBudget) -> Result<TransmissionPlan> {
        self.check_budget(budget, gamma)?;
        let (n, b) = (self.bank.n_sub(), self.bank.bits() as usize);
        let cap = budget.p_tot * gamma;
        let m_hat = TempModMatrix::uniform(n, b, budget.rate);
        for v in 0..self.bank.len() {
            let assignment = vec![v; n];
            if self.unit_power(&assignment, &m_hat) <= cap {
                return self.finish(&assignment, &m_hat, gamma, budget, false);
            }
        }
        self.finish(&vec![self.bank.len() - 1; n], &m_hat, gamma, budget, true)
    }

    pub fn plan(&self, method: Method, gamma: f64, budget: &LinkBudget) -> Result<TransmissionPlan> {
        match method {
            Method::Jcamp => self.jcamp(gamma, budget),
            Method::Jcap => self.jcap(gamma, budget),
            Method::Baseline => self.baseline(gamma, budget),
        }
    }

    /// Groups bits into symbols and assigns BER-matched powers.
    ///
    /// Coordinates are ranked by `(mu, i, j)`. Each symbol starts at the
    /// lowest-ranked unassigned bit, takes its order `m_t`, and collects the
    /// `m_t` lowest-ranked unassigned bits of that order. Its power matches
    /// the group's mean flip probability; the remaining budget is then spread
    /// evenly over all `T` symbols. If that would leave a negative power, all
    /// powers are instead scaled proportionally and the plan is marked
    /// `scaled`.
    pub fn post_process(
        &self,
        assignment: &[usize],
        m_hat: &TempModMatrix,
        gamma: f64,
        budget: &LinkBudget,
    ) -> Result<TransmissionPlan> {
        self.check_state(assignment, m_hat)?;
        self.check_budget(budget, gamma)?;
        self.finish(assignment, m_hat, gamma, budget, false)
    }

    fn finish(
        &self,
        assignment: &[usize],
        m_hat: &TempModMatrix,
        gamma: f64,
        budget: &LinkBudget,
        infeasible: bool,
    ) -> Result<TransmissionPlan> {
        let bits = m_hat.bits;
        let mut ranked: Vec<(f64, usize)> = (0..m_hat.orders.len())
            .map(|f| (self.mu(assignment[f / bits], f / bits, f % bits), f))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        // per-order queues of flat indices in rank order
        let mut queues: Vec<std::collections::VecDeque<(f64, usize)>> =
            vec![Default::default(); (self.m_max / 2 + 1) as usize];
        for &(mu, f) in &ranked {
            let m = m_hat.orders[f];
            if m > self.m_max {
                return Err(Error::InvalidModOrder(m));
            }
            queues[(m / 2) as usize].push_back((mu, f));
        }
        let mut taken = vec![false; ranked.len()];
        let mut symbols = Vec::new();
        for &(_, start) in &ranked {
            if taken[start] {
                continue;
            }
            let m = m_hat.orders[start];
            let queue = &mut queues[(m / 2) as usize];
            if queue.len() < m as usize {
                return Err(Error::Config(format!(
                    "bits at order {m} cannot be split into whole symbols"
                )));
            }
            let group: Vec<(f64, usize)> = queue.drain(..m as usize).collect();
            debug_assert_eq!(group[0].1, start);
            let mu_bar = group.iter().map(|g| g.0).sum::<f64>() / m as f64;
            let order = ModOrder::new(m)?;
            let p = inverse_or_zero(mu_bar, order)? / gamma;
            symbols.push(SymbolRecord {
                m: order,
                p,
                group: group
                    .iter()
                    .map(|&(_, f)| {
                        taken[f] = true;
                        (f / bits, f % bits)
                    })
                    .collect(),
                mu_bar,
            });
        }

        let total: f64 = symbols.iter().map(|s| s.p).sum();
        let shift = (budget.p_tot - total) / symbols.len() as f64;
        let mut scaled = infeasible;
        if infeasible || symbols.iter().any(|s| s.p + shift < 0.0) {
            scaled = true;
            let factor = budget.p_tot / total;
            symbols.iter_mut().for_each(|s| s.p *= factor);
        } else {
            symbols.iter_mut().for_each(|s| s.p += shift);
        }
        Ok(TransmissionPlan {
            assignment: assignment.to_vec(),
            symbols,
            scaled,
        })
    }
}

/// Index of the largest `Some` value, smallest index on ties.
fn argmax(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in values.iter().enumerate() {
        if let Some(r) = *r {
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((i, r));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Incremental P1 state: per-row temporary powers and downgrade ratios.
struct Greedy<'s, 'a> {
    alloc: &'s Allocator<'a>,
    v: Vec<usize>,
    rows: Vec<f64>,
    ratios: Vec<Option<f64>>,
}

impl<'s, 'a> Greedy<'s, 'a> {
    fn new(alloc: &'s Allocator<'a>, v: Vec<usize>, m_hat: &TempModMatrix) -> Self {
        let n = v.len();
        let mut g = Greedy {
            alloc,
            v,
            rows: vec![0.0; n],
            ratios: vec![None; n],
        };
        g.refresh(m_hat);
        g
    }

    fn refresh(&mut self, m_hat: &TempModMatrix) {
        for i in 0..self.v.len() {
            self.update_row(i, m_hat);
        }
    }

    fn update_row(&mut self, i: usize, m_hat: &TempModMatrix) {
        let v = self.v[i];
        self.rows[i] = self.alloc.row_power(v, i, m_hat);
        self.ratios[i] = (v > 0).then(|| self.alloc.ratio(i, v, m_hat));
    }

    fn feasible(&self, cap: f64) -> bool {
        self.rows.iter().sum::<f64>() <= cap
    }

    fn select(&self) -> Option<usize> {
        argmax(&self.ratios)
    }

    fn downgrade(&mut self, i: usize, m_hat: &TempModMatrix) {
        self.v[i] -= 1;
        self.update_row(i, m_hat);
    }

    fn upgrade(&mut self, i: usize, m_hat: &TempModMatrix) {
        self.v[i] += 1;
        self.update_row(i, m_hat);
    }
}

pub fn p1_select(
    assignment: &[usize],
    m_hat: &TempModMatrix,
    table: &DistortionTable,
    bank: &CodebookBank,
) -> Result<usize> {
    let m_max = m_hat.orders.iter().copied().max().unwrap_or(2).max(2);
    Allocator::new(bank, table, m_max)?.p1_select(assignment, m_hat)
}

pub fn p2_swap(
    m_hat: &TempModMatrix,
    assignment: &[usize],
    table: &DistortionTable,
    bank: &CodebookBank,
    m_max: u32,
) -> Result<TempModMatrix> {
    let mut out = m_hat.clone();
    Allocator::new(bank, table, m_max)?.p2_swap(&mut out, assignment)?;
    Ok(out)
}

pub fn jcamp(table: &DistortionTable, bank: &CodebookBank, gamma: f64, budget: &LinkBudget) -> Result<TransmissionPlan> {
    Allocator::new(bank, table, budget.m_max)?.jcamp(gamma, budget)
}

pub fn jcap(table: &DistortionTable, bank: &CodebookBank, gamma: f64, budget: &LinkBudget) -> Result<TransmissionPlan> {
    Allocator::new(bank, table, budget.m_max)?.jcap(gamma, budget)
}

pub fn codebook_selection_baseline(
    table: &DistortionTable,
    bank: &CodebookBank,
    gamma: f64,
    budget: &LinkBudget,
) -> Result<TransmissionPlan> {
    Allocator::new(bank, table, budget.m_max)?.baseline(gamma, budget)
}

pub fn post_process(
    assignment: &[usize],
    m_hat: &TempModMatrix,
    table: &DistortionTable,
    bank: &CodebookBank,
    gamma: f64,
    budget: &LinkBudget,
) -> Result<TransmissionPlan> {
    Allocator::new(bank, table, budget.m_max)?.post_process(assignment, m_hat, gamma, budget)
}
