//! Product VQ round trip: split a feature vector, quantize each sub-vector
//! with its assigned codebook, map indices to bits and back.

use mvqlink::dataset::synth_mixture;
use mvqlink::train::{train_sequential, TrainConfig};
use mvqlink::vq::{bits_to_index, index_to_bits, quantize_features, reconstruct, squared_distance};

fn main() -> mvqlink::Result<()> {
    let data = synth_mixture(200, 8, 2, 6, 1)?;
    let cfg = TrainConfig {
        n_books: 2,
        dim: 2,
        bits: 5,
        n_sub: 8,
        mu_min: vec![0.001, 0.02],
        lambda: vec![0.125, 0.25],
        max_iters: 8,
        ..TrainConfig::default()
    };
    let bank = train_sequential(&data, &cfg)?.bank;

    let z = data.feature(0);
    let assignment = [0, 0, 0, 0, 1, 1, 1, 1];
    let indices = quantize_features(z, &assignment, &bank)?;
    let bits: Vec<Vec<u8>> = indices.iter().map(|&k| index_to_bits(k, bank.bits())).collect::<Result<_, _>>()?;
    for (i, (k, b)) in indices.iter().zip(&bits).enumerate() {
        let s: String = b.iter().map(|x| char::from(b'0' + x)).collect();
        println!("sub-vector {i}: codebook {} index {k:>2} bits {s}", assignment[i]);
        assert_eq!(bits_to_index(b)?, *k);
    }
    let z_hat = reconstruct(&bits, &assignment, &bank)?;
    println!("quantization error {:.5}", squared_distance(z, &z_hat));
    Ok(())
}
