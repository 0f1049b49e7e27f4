//! Simulates every symbol of a plan at its designed power and compares
//! the empirical bit error rate with the target.

use mvqlink::allocator::{Allocator, LinkBudget};
use mvqlink::dataset::synth_gaussian;
use mvqlink::distortion::build_table;
use mvqlink::sim::verify_ber;
use mvqlink::train::{train_sequential, TrainConfig};

fn main() -> mvqlink::Result<()> {
    let data = synth_gaussian(200, 16, 4, 2)?;
    let cfg = TrainConfig { n_sub: 16, bits: 6, max_iters: 6, ..TrainConfig::default() };
    let bank = train_sequential(&data, &cfg)?.bank;
    let rows: Vec<&[f64]> = data.iter().collect();
    let table = build_table(&rows, &bank)?;
    let alloc = Allocator::new(&bank, &table, 6)?;
    let budget = LinkBudget::new(bank.total_bits() as f64, 4, 6)?;

    let gamma = 10f64.powf(0.7);
    let plan = alloc.jcamp(gamma, &budget)?;
    let checks = verify_ber(&plan, gamma, 1_000_000, 4)?;
    println!("{:>3} {:>2} {:>9} {:>11} {:>11} {:>7}", "t", "m", "power", "target", "empirical", "rel");
    for c in &checks {
        println!(
            "{:>3} {:>2} {:>9.3} {:>11.3e} {:>11.3e} {:>6.1}%",
            c.symbol,
            c.m,
            c.p,
            c.target,
            c.empirical(),
            100.0 * c.relative_error()
        );
    }
    Ok(())
}
