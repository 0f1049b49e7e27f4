//! Codebook assignment, modulation and power allocation for one feature
//! vector: the joint greedy, the fixed-modulation greedy and single-codebook
//! selection at several instantaneous SNRs.

use mvqlink::allocator::{Allocator, LinkBudget, Method};
use mvqlink::dataset::synth_gaussian;
use mvqlink::distortion::build_table;
use mvqlink::train::{train_sequential, TrainConfig};

fn main() -> mvqlink::Result<()> {
    let data = synth_gaussian(200, 32, 4, 9)?;
    let cfg = TrainConfig { n_sub: 32, bits: 6, max_iters: 6, ..TrainConfig::default() };
    let bank = train_sequential(&data, &cfg)?.bank;
    let rows: Vec<&[f64]> = data.iter().collect();
    let table = build_table(&rows, &bank)?;

    let nb = bank.total_bits() as f64;
    let budget = LinkBudget::new(nb, 4, 6)?;
    let alloc = Allocator::new(&bank, &table, 6)?;
    for snr_db in [2.0, 5.0, 8.0, 11.0] {
        let gamma = 10f64.powf(snr_db / 10.0);
        println!("instantaneous SNR {snr_db} dB");
        for method in [Method::Jcamp, Method::Jcap, Method::Baseline] {
            let plan = alloc.plan(method, gamma, &budget)?;
            let mut orders = [0usize; 4];
            for s in &plan.symbols {
                orders[s.m.bits() as usize / 2 - 1] += 1;
            }
            println!(
                "  {method:<8} D {:>8.3}  mean index {:.2}  symbols by order 2/4/6/8 {:?}{}",
                plan.expected_distortion(&table),
                plan.mean_codebook_index(),
                orders,
                if plan.scaled { "  (scaled)" } else { "" }
            );
        }
    }
    Ok(())
}
