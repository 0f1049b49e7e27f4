//! Precomputed plans over a quantized SNR grid versus planning per gain.

use mvqlink::allocator::{build_lut, lut_plan, lut_range, Allocator, LinkBudget, Method};
use mvqlink::dataset::synth_gaussian;
use mvqlink::distortion::build_table;
use mvqlink::train::{train_sequential, TrainConfig};

fn main() -> mvqlink::Result<()> {
    let data = synth_gaussian(200, 32, 4, 9)?;
    let cfg = TrainConfig { n_sub: 32, bits: 6, max_iters: 6, ..TrainConfig::default() };
    let bank = train_sequential(&data, &cfg)?.bank;
    let rows: Vec<&[f64]> = data.iter().collect();
    let table = build_table(&rows, &bank)?;
    let alloc = Allocator::new(&bank, &table, 6)?;
    let budget = LinkBudget::new(bank.total_bits() as f64, 4, 6)?;

    let (lo, hi) = lut_range(&alloc, &budget)?;
    println!("SNR range [{lo:.2}, {hi:.2}] dB");
    for bits in [3, 5, 8] {
        let lut = build_lut(&alloc, &budget, lo, hi, bits, Method::Jcamp)?;
        let mut worst: f64 = 0.0;
        for k in 0..200 {
            let snr = lo + (hi - lo) * (k as f64 + 0.5) / 200.0;
            let gamma = 10f64.powf(snr / 10.0);
            let exact = alloc.jcamp(gamma, &budget)?.expected_distortion(&table);
            let cached = lut_plan(&lut, gamma).expected_distortion(&table);
            worst = worst.max((cached - exact).abs() / exact);
        }
        println!("{bits}-bit table ({} cells): worst relative distortion gap {:.3}%", lut.cells(), 100.0 * worst);
    }
    Ok(())
}
