//! Parallel binary symmetric channels.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Stand-in for `ln 0`, close to the smallest log a double can represent.
pub const LOG_FLOOR: f64 = -745.0;

pub(crate) fn check_mu_row(mu: &[f64]) -> Result<()> {
    match mu.iter().find(|&&m| !(0.0..=0.5).contains(&m)) {
        Some(bad) => Err(Error::InvalidProbability(format!(
            "bit-flip probability {bad} outside [0, 0.5]"
        ))),
        None => Ok(()),
    }
}

/// Probability that `B` parallel BSCs map bit string `a` onto `b`.
pub fn bsc_transition_prob(a: &[u8], b: &[u8], mu: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() != mu.len() {
        return Err(Error::BitLength {
            got: b.len().max(mu.len()),
            expected: a.len(),
        });
    }
    check_mu_row(mu)?;
    Ok(a.iter()
        .zip(b)
        .zip(mu)
        .map(|((x, y), &m)| if x != y { m } else { 1.0 - m })
        .product())
}

/// Log-probability of every flip pattern `x` in `0..2^B`, where bit `j` of the
/// pattern (big-endian, `j = 0` is the most significant) flips position `j`.
/// `p(c_k | c_q)` is the entry at `k ^ q`. Zero probabilities map to
/// [`LOG_FLOOR`].
pub fn flip_pattern_log_probs(mu: &[f64]) -> Vec<f64> {
    let b = mu.len();
    let mut out = vec![0.0; 1 << b];
    for (j, &m) in mu.iter().enumerate() {
        let stay = (1.0 - m).ln().max(LOG_FLOOR);
        let flip = if m > 0.0 { m.ln().max(LOG_FLOOR) } else { LOG_FLOOR };
        let mask = 1usize << (b - 1 - j);
        for (x, lp) in out.iter_mut().enumerate() {
            *lp += if x & mask != 0 { flip } else { stay };
        }
    }
    out.iter_mut().for_each(|lp| *lp = lp.max(LOG_FLOOR));
    out
}

/// Probability of every flip pattern, accumulated in log space. Patterns that
/// require flipping a zero-probability bit get exactly `0`.
pub fn flip_pattern_probs(mu: &[f64]) -> Vec<f64> {
    let b = mu.len();
    let mut logs = vec![0.0f64; 1 << b];
    for (j, &m) in mu.iter().enumerate() {
        let stay = (1.0 - m).ln();
        let flip = m.ln();
        let mask = 1usize << (b - 1 - j);
        for (x, lp) in logs.iter_mut().enumerate() {
            *lp += if x & mask != 0 { flip } else { stay };
        }
    }
    logs.into_iter().map(f64::exp).collect()
}

/// Passes `a` through the channel, flipping bit `j` with probability `mu[j]`.
pub fn bsc_sample_with<R: Rng + ?Sized>(a: &[u8], mu: &[f64], rng: &mut R) -> Result<Vec<u8>> {
    if a.len() != mu.len() {
        return Err(Error::BitLength {
            got: mu.len(),
            expected: a.len(),
        });
    }
    check_mu_row(mu)?;
    Ok(a.iter()
        .zip(mu)
        .map(|(&bit, &m)| if rng.random::<f64>() < m { bit ^ 1 } else { bit })
        .collect())
}

pub fn bsc_sample(a: &[u8], mu: &[f64], seed: u64) -> Result<Vec<u8>> {
    bsc_sample_with(a, mu, &mut rng_from_seed(seed))
}
