//! Flat `key = value` configuration documents.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored. Lists
//! are comma separated. Later assignments override earlier ones, which is
//! also how command-line flags override file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::{SweepConfig, SweepMethod};
use crate::train::{default_lambda, TrainConfig, DEFAULT_MU_MIN};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            kv.set(k, v.trim());
        }
        Ok(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.map.insert(key.to_string(), value.to_string());
    }

    /// Sets `key` only when `value` is present.
    pub fn set_opt<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.map
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("{key} = '{v}': {e}"))))
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.map
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("{key}: '{s}': {e}"))))
                    .collect()
            })
            .transpose()
    }

    /// Fails on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown key '{k}' (known: {})", allowed.join(", ")))),
            None => Ok(()),
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "n_books", "dim", "bits", "n_sub", "mu_min", "lambda", "max_iters", "tol", "init", "profile_mode", "seed",
    "refine_step", "refine_iters", "split_iters",
];

/// Training settings; unspecified keys take [`TrainConfig::default`] values.
/// When only `n_books` is given, `mu_min` and `lambda` default to the first
/// `n_books` reference floors and `2^v / 8`.
pub fn train_config(kv: &KeyValues) -> Result<TrainConfig> {
    kv.reject_unknown(TRAIN_KEYS)?;
    let d = TrainConfig::default();
    let n_books = kv.get_or("n_books", d.n_books)?;
    let mu_min = match kv.get_list("mu_min")? {
        Some(l) => l,
        None if n_books <= DEFAULT_MU_MIN.len() => DEFAULT_MU_MIN[..n_books].to_vec(),
        None => return Err(Error::Config(format!("mu_min must be given for n_books = {n_books}"))),
    };
    let cfg = TrainConfig {
        n_books,
        dim: kv.get_or("dim", d.dim)?,
        bits: kv.get_or("bits", d.bits)?,
        n_sub: kv.get_or("n_sub", d.n_sub)?,
        mu_min,
        lambda: kv.get_list("lambda")?.unwrap_or_else(|| default_lambda(n_books)),
        max_iters: kv.get_or("max_iters", d.max_iters)?,
        tol: kv.get_or("tol", d.tol)?,
        init: kv.get_or("init", d.init)?,
        profile_mode: kv.get_or("profile_mode", d.profile_mode)?,
        seed: kv.get_or("seed", d.seed)?,
        refine_step: kv.get_or("refine_step", d.refine_step)?,
        refine_iters: kv.get_or("refine_iters", d.refine_iters)?,
        split_iters: kv.get_or("split_iters", d.split_iters)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub const SWEEP_KEYS: &[&str] = &[
    "snr_db", "channel", "trials", "method", "seed", "rate", "m_max", "lut_bits", "bank", "table", "dataset",
];

pub fn sweep_config(kv: &KeyValues) -> Result<SweepConfig> {
    kv.reject_unknown(SWEEP_KEYS)?;
    let d = SweepConfig::default();
    let path = |k: &str| kv.get_str(k).map(PathBuf::from);
    let cfg = SweepConfig {
        snr_db: kv.get_list("snr_db")?.unwrap_or(d.snr_db),
        channel: kv.get_or("channel", d.channel)?,
        trials: kv.get_or("trials", d.trials)?,
        method: kv.get_or::<SweepMethod>("method", d.method)?,
        seed: kv.get_or("seed", d.seed)?,
        rate: kv.get_or("rate", d.rate)?,
        m_max: kv.get_or("m_max", d.m_max)?,
        lut_bits: kv.get_or("lut_bits", d.lut_bits)?,
        bank: path("bank"),
        table: path("table"),
        dataset: path("dataset"),
    };
    cfg.validate()?;
    Ok(cfg)
}
