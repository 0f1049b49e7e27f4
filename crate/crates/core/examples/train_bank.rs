//! Sequential training of a three-codebook bank with fixed and refined
//! bit-flip profiles. Writes the training log to stdout as CSV.

use mvqlink::dataset::synth_gaussian;
use mvqlink::train::{train_sequential, ProfileMode, TrainConfig};

fn main() -> mvqlink::Result<()> {
    let data = synth_gaussian(300, 16, 4, 5)?;
    for mode in [ProfileMode::Fixed, ProfileMode::Refined] {
        let cfg = TrainConfig {
            n_books: 3,
            n_sub: 16,
            bits: 6,
            mu_min: vec![0.0005, 0.001, 0.0045],
            lambda: vec![0.125, 0.25, 0.5],
            max_iters: 15,
            profile_mode: mode,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train_sequential(&data, &cfg)?;
        println!("# {mode:?}");
        print!("{}", out.log.to_csv());
        for v in 0..out.bank.len() {
            let mu = out.bank.profile(v).as_flat();
            let mean = mu.iter().sum::<f64>() / mu.len() as f64;
            println!("# codebook {v}: mean flip probability {mean:.5}");
        }
    }
    Ok(())
}
