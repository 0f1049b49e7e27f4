//! Differentiable soft reconstruction: softmax weights over codewords from
//! channel transition log-probabilities perturbed by Gumbel noise.

use mvqlink::channel::{gumbel_soft_reconstruct, GumbelConfig};
use mvqlink::vq::Codebook;

fn main() -> mvqlink::Result<()> {
    let cb = Codebook::from_flat(2, 2, vec![-1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0])?;
    let mu = [0.05, 0.2];
    let schedule = GumbelConfig::default();
    for step in [0, 1000, 10_000] {
        let tau = schedule.tau_at(step);
        let (w, soft) = gumbel_soft_reconstruct(3, &cb, &mu, tau, step)?;
        println!("step {step:>6} tau {tau:.4} weights {w:.3?} soft codeword {soft:.3?}");
    }
    Ok(())
}
