//! Approximate bit error rate of Gray-mapped square QAM and its inverse.
//!
//! For `m` bits per symbol, with `M = 2^m` and `s = sqrt(3 p gamma / (2 (M - 1)))`,
//!
//! ```text
//! ber(p; m) = (sqrt(M) - 1) / (sqrt(M) * m/2) * erfc(s)
//!           + (sqrt(M) - 2) / (sqrt(M) * m/2) * erfc(3 s)
//! ```
//!
//! The expression depends on `p` and `gamma` only through `p * gamma`, so the
//! inverse is solved once at unit gain and divided by `gamma`. No clamping is
//! applied: `ber(0; m)` exceeds 0.5 for `m >= 4`, which keeps the function
//! strictly decreasing on `[0, inf)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported modulation order (bits per symbol).
pub const MAX_MOD_ORDER: u32 = 20;

/// Bits per square-QAM symbol: even, at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ModOrder(u32);

impl ModOrder {
    pub const QPSK: ModOrder = ModOrder(2);

    pub fn new(m: u32) -> Result<Self> {
        if m < 2 || m % 2 != 0 || m > MAX_MOD_ORDER {
            return Err(Error::InvalidModOrder(m));
        }
        Ok(ModOrder(m))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// Levels per I/Q axis, `2^(m/2)`.
    pub fn side(self) -> u32 {
        1 << (self.0 / 2)
    }

    pub fn points(self) -> u32 {
        1 << self.0
    }
}

impl TryFrom<u32> for ModOrder {
    type Error = Error;
    fn try_from(m: u32) -> Result<Self> {
        ModOrder::new(m)
    }
}

impl From<ModOrder> for u32 {
    fn from(m: ModOrder) -> u32 {
        m.0
    }
}

impl fmt::Display for ModOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn coefficients(m: ModOrder) -> (f64, f64) {
    let side = m.side() as f64;
    let denom = side * (m.bits() as f64 / 2.0);
    ((side - 1.0) / denom, (side - 2.0) / denom)
}

/// BER as a function of the received SNR `x = p * gamma`.
pub(crate) fn ber_at_snr(x: f64, m: ModOrder) -> f64 {
    let (a1, a2) = coefficients(m);
    let s = (3.0 * x / (2.0 * (m.points() as f64 - 1.0))).sqrt();
    let head = a1 * libm::erfc(s);
    if a2 == 0.0 {
        head
    } else {
        head + a2 * libm::erfc(3.0 * s)
    }
}

/// Approximate BER of `m`-bit QAM sent with power `p` over gain-to-noise ratio `gamma`.
pub fn ber_approx(p: f64, m: ModOrder, gamma: f64) -> f64 {
    ber_at_snr(p * gamma, m)
}

/// `ber_approx(0; m)`, the largest reachable target.
pub fn ber_ceiling(m: ModOrder) -> f64 {
    let (a1, a2) = coefficients(m);
    a1 + a2
}

/// Received SNR `x` with `ber_at_snr(x, m) == target`.
pub(crate) fn inverse_at_unit_gain(target: f64, m: ModOrder) -> Result<f64> {
    let ceiling = ber_ceiling(m);
    if !(target > 0.0) || target > ceiling {
        return Err(Error::UnreachableTarget {
            target,
            m: m.bits(),
            max: ceiling,
        });
    }
    if target == ceiling {
        return Ok(0.0);
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while ber_at_snr(hi, m) >= target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::UnreachableTarget {
                target,
                m: m.bits(),
                max: ceiling,
            });
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        if ber_at_snr(mid, m) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Power `p` with `ber_approx(p, m, gamma) == target`, by bracketed bisection.
pub fn ber_inverse(target: f64, m: ModOrder, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    Ok(inverse_at_unit_gain(target, m)? / gamma)
}
