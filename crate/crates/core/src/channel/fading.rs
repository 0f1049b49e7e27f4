//! Block-fading channel draws: one coefficient per feature vector.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    Awgn,
    Rayleigh,
}

impl FromStr for ChannelModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelModel::Awgn),
            "rayleigh" => Ok(ChannelModel::Rayleigh),
            other => Err(Error::Config(format!("unknown channel model '{other}'"))),
        }
    }
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelModel::Awgn => "awgn",
            ChannelModel::Rayleigh => "rayleigh",
        })
    }
}

/// Fading coefficient, noise power and their ratio `gamma = |h|^2 / sigma2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub h: Complex64,
    pub sigma2: f64,
    pub gamma: f64,
}

impl ChannelState {
    pub fn new(h: Complex64, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Config(format!("noise power must be positive, got {sigma2}")));
        }
        Ok(ChannelState {
            h,
            sigma2,
            gamma: h.norm_sqr() / sigma2,
        })
    }

    /// Real, positive coefficient with unit noise power, so `gamma == |h|^2`.
    pub fn from_gamma(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        Self::new(Complex64::new(gamma.sqrt(), 0.0), 1.0)
    }

    /// `CN(0, sigma2)` noise sample.
    #[inline]
    pub fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let s = (0.5 * self.sigma2).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    }
}

pub fn draw_channel_with<R: Rng + ?Sized>(
    model: ChannelModel,
    sigma2: f64,
    rng: &mut R,
) -> Result<ChannelState> {
    let h = match model {
        ChannelModel::Awgn => Complex64::new(1.0, 0.0),
        ChannelModel::Rayleigh => {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        }
    };
    ChannelState::new(h, sigma2)
}

pub fn draw_channel(model: ChannelModel, sigma2: f64, seed: u64) -> Result<ChannelState> {
    draw_channel_with(model, sigma2, &mut rng_from_seed(seed))
}
