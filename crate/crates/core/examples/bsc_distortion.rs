//! Expected distortion of one sub-vector sent over a binary symmetric
//! channel with per-bit flip probabilities, and its gradient.

use mvqlink::channel::{bsc_sample, flip_pattern_probs};
use mvqlink::distortion::{distortion_grad_mu, expected_distortion};
use mvqlink::vq::{bits_to_index, index_to_bits, quantize, squared_distance, Codebook};

fn main() -> mvqlink::Result<()> {
    // 3-bit scalar codebook on a grid
    let cb = Codebook::from_flat(1, 3, (0..8).map(|k| k as f64 - 3.5).collect())?;
    let z = [0.8];
    let mu = [0.01, 0.05, 0.2];

    let probs = flip_pattern_probs(&mu);
    println!("flip pattern probabilities: {probs:.4?}");
    let d = expected_distortion(&z, &cb, &mu)?;
    let g = distortion_grad_mu(&z, &cb, &mu)?;
    println!("expected distortion {d:.5}, gradient {g:.4?}");

    // Monte Carlo estimate of the same quantity
    let (k, _) = quantize(&z, &cb)?;
    let sent = index_to_bits(k, 3)?;
    let trials = 200_000;
    let mc: f64 = (0..trials)
        .map(|t| {
            let got = bits_to_index(&bsc_sample(&sent, &mu, t).unwrap()).unwrap();
            squared_distance(&z, cb.codeword(got))
        })
        .sum::<f64>()
        / trials as f64;
    println!("Monte Carlo over {trials} draws: {mc:.5}");
    Ok(())
}
