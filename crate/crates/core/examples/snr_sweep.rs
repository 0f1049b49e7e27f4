//! Monte Carlo sweep over normalized SNR on a Rayleigh channel for each
//! planner. Prints mean expected distortion, realized MSE and codebook use.

use mvqlink::allocator::Allocator;
use mvqlink::dataset::synth_gaussian;
use mvqlink::distortion::build_table;
use mvqlink::sim::{run_sweep, SweepConfig, SweepMethod};
use mvqlink::train::{train_sequential, TrainConfig};

fn main() -> mvqlink::Result<()> {
    let data = synth_gaussian(200, 32, 4, 9)?;
    let cfg = TrainConfig { n_sub: 32, bits: 6, max_iters: 6, ..TrainConfig::default() };
    let bank = train_sequential(&data, &cfg)?.bank;
    let rows: Vec<&[f64]> = data.iter().collect();
    let table = build_table(&rows, &bank)?;
    let alloc = Allocator::new(&bank, &table, 6)?;

    for method in [SweepMethod::Jcamp, SweepMethod::Jcap, SweepMethod::Baseline, SweepMethod::Lut] {
        let config = SweepConfig {
            snr_db: vec![0.0, 4.0, 8.0, 12.0],
            trials: 100,
            method,
            seed: 1,
            ..SweepConfig::default()
        };
        let report = run_sweep(&data, &alloc, &config)?;
        println!("{method:?}");
        for p in &report.points {
            println!(
                "  {:>5.1} dB  expected {:>7.3}  mse {:>7.3}  mean index {:.2}  scaled {:.2}",
                p.snr_db, p.expected_distortion, p.mse, p.mean_codebook_index, p.scaled_fraction
            );
        }
    }
    Ok(())
}
