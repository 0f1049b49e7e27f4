//! Gray QAM bit error rate: closed-form approximation, its inverse, and a
//! Monte Carlo check over AWGN.

use mvqlink::channel::{ber_approx, ber_inverse, ModOrder};
use mvqlink::sim::simulate_qam_ber;

fn main() -> mvqlink::Result<()> {
    println!("{:>3} {:>8} {:>10} {:>10} {:>10}", "m", "target", "p*gamma", "approx", "simulated");
    for m in [2, 4, 6] {
        let order = ModOrder::new(m)?;
        for target in [1e-3, 1e-2, 0.1] {
            let p = ber_inverse(target, order, 1.0)?;
            let bits = (2000.0 / target) as u64;
            let sim = simulate_qam_ber(order, p, bits, m as u64)?;
            println!("{m:>3} {target:>8.0e} {p:>10.4} {:>10.3e} {sim:>10.3e}", ber_approx(p, order, 1.0));
        }
    }
    Ok(())
}
