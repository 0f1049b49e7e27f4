//! Gumbel-softmax relaxation of a BSC-corrupted codeword lookup.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bsc::{check_mu_row, flip_pattern_log_probs};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::vq::Codebook;

/// Softmax temperature with multiplicative annealing every `anneal_period` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelConfig {
    pub tau: f64,
    pub anneal_factor: f64,
    pub anneal_period: u64,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        GumbelConfig {
            tau: 0.5,
            anneal_factor: (-0.003f64).exp(),
            anneal_period: 100,
        }
    }
}

impl GumbelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor <= 1.0) {
            return Err(Error::Config(format!(
                "anneal factor must lie in (0, 1], got {}",
                self.anneal_factor
            )));
        }
        if self.anneal_period == 0 {
            return Err(Error::Config("anneal period must be positive".into()));
        }
        Ok(())
    }

    /// Temperature in effect at training iteration `iteration`.
    pub fn tau_at(&self, iteration: u64) -> f64 {
        self.tau * self.anneal_factor.powf((iteration / self.anneal_period) as f64)
    }
}

/// Standard Gumbel(0, 1) draw.
fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // open interval keeps both logs finite
    let u: f64 = loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    -(-u.ln()).ln()
}

pub fn gumbel_soft_reconstruct_with<R: Rng + ?Sized>(
    index: usize,
    codebook: &Codebook,
    mu: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    if mu.len() != codebook.bits() as usize {
        return Err(Error::BitLength {
            got: mu.len(),
            expected: codebook.bits() as usize,
        });
    }
    if index >= codebook.len() {
        return Err(Error::IndexOutOfRange {
            index,
            bits: codebook.bits(),
        });
    }
    check_mu_row(mu)?;
    let log_p = flip_pattern_log_probs(mu);
    let logits: Vec<f64> = (0..codebook.len())
        .map(|k| (log_p[k ^ index] + gumbel(rng)) / tau)
        .collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut soft = vec![0.0; codebook.dim()];
    for (w, c) in weights.iter().zip(codebook.iter()) {
        soft.iter_mut().zip(c).for_each(|(s, x)| *s += w * x);
    }
    Ok((weights, soft))
}

/// Softmax weights over all codewords for the transmitted `index` and the
/// resulting convex combination of codewords.
pub fn gumbel_soft_reconstruct(
    index: usize,
    codebook: &Codebook,
    mu: &[f64],
    tau: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    gumbel_soft_reconstruct_with(index, codebook, mu, tau, &mut rng_from_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::bsc::bsc_transition_prob;
    use crate::rng::derive_seed;
    use crate::vq::index_to_bits;

    fn codebook3() -> Codebook {
        Codebook::from_flat(2, 3, (0..16).map(|x| x as f64 * 0.5 - 3.0).collect()).unwrap()
    }

    #[test]
    fn noiseless_collapses_to_sent_codeword() {
        let cb = codebook3();
        let (w, soft) = gumbel_soft_reconstruct(5, &cb, &[0.0; 3], 1e-3, 9).unwrap();
        assert!((w[5] - 1.0).abs() < 1e-12);
        for (s, c) in soft.iter().zip(cb.codeword(5)) {
            assert!((s - c).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_form_simplex() {
        let cb = codebook3();
        for seed in 0..50 {
            let (w, _) = gumbel_soft_reconstruct(seed as usize % 8, &cb, &[0.1, 0.3, 0.02], 0.7, seed).unwrap();
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(gumbel_soft_reconstruct(0, &cb, &[0.1; 3], 0.0, 1).is_err());
    }

    #[test]
    fn max_weight_sharpens_as_tau_drops() {
        let cb = codebook3();
        let mu = [0.2, 0.3, 0.1];
        let mean_max = |tau: f64| -> f64 {
            (0..2000u64)
                .map(|s| {
                    let (w, _) = gumbel_soft_reconstruct(2, &cb, &mu, tau, s).unwrap();
                    w.iter().cloned().fold(0.0, f64::max)
                })
                .sum::<f64>()
                / 2000.0
        };
        let (hot, warm, cold) = (mean_max(2.0), mean_max(0.5), mean_max(0.01));
        assert!(hot < warm && warm < cold && cold > 0.99, "{hot} {warm} {cold}");
    }

    #[test]
    fn annealing_schedule() {
        let cfg = GumbelConfig::default();
        assert_eq!(cfg.tau_at(99), 0.5);
        assert!((cfg.tau_at(250) - 0.5 * (-0.006f64).exp()).abs() < 1e-15);
    }

    // Gumbel-max: argmax of the perturbed logits samples the BSC output law.
    #[test]
    fn argmax_matches_transition_law() {
        let cb = codebook3();
        let mu = [0.05, 0.2, 0.35];
        let sent = 3usize;
        let n = 100_000u64;
        let mut counts = [0u64; 8];
        for s in 0..n {
            let (w, _) = gumbel_soft_reconstruct(sent, &cb, &mu, 0.01, derive_seed(17, &[s])).unwrap();
            let arg = (0..8).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
            counts[arg] += 1;
        }
        let a = index_to_bits(sent, 3).unwrap();
        let chi2: f64 = (0..8)
            .map(|k| {
                let e = n as f64 * bsc_transition_prob(&a, &index_to_bits(k, 3).unwrap(), &mu).unwrap();
                (counts[k] as f64 - e).powi(2) / e
            })
            .sum();
        // chi-square critical value, 7 degrees of freedom, 1% level
        assert!(chi2 < 18.475, "chi2 = {chi2}, counts = {counts:?}");
    }
}
