use super::*;
use crate::dataset::{synth_gaussian, synth_mixture};
use crate::distortion::{build_table, distortion_grad_mu, expected_distortion};
use crate::vq::squared_distance;

fn brute_mean(codebook: &Codebook, mu: &[f64], data: &Dataset) -> f64 {
    let b = codebook.bits() as usize;
    let mut sum = 0.0;
    for s in 0..data.len() {
        for i in 0..data.n_sub() {
            sum += expected_distortion(data.sub(s, i), codebook, &mu[i * b..(i + 1) * b]).unwrap();
        }
    }
    sum / (data.len() * data.n_sub()) as f64
}

fn random_mu(n: usize, b: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n * b).map(|_| rng.random_range(lo..hi)).collect()
}

fn random_codebook(dim: usize, bits: u32, seed: u64) -> Codebook {
    let d = synth_gaussian(1 << bits, 1, dim, seed).unwrap();
    Codebook::from_flat(dim, bits, d.as_flat().to_vec()).unwrap()
}

#[test]
fn regularizer_spot_values() {
    let e = std::f64::consts::E;
    assert!((regularizer(&[1.0 / e; 6]).unwrap() + 1.0 / e).abs() < 1e-12);
    assert!((regularizer(&[0.5; 4]).unwrap() - (-0.346_573_590_279_972_65)).abs() < 1e-12);
    assert!(regularizer(&[1.0 - 1e-12]).unwrap().abs() < 1e-11);
    assert!(regularizer(&[0.0, 0.1]).is_err());
    assert!(regularizer(&[1.0]).is_err());
    // 1/e is the minimum over a grid.
    let min = regularizer(&[1.0 / e]).unwrap();
    for k in 1..100 {
        assert!(regularizer(&[k as f64 / 100.0]).unwrap() >= min);
    }
}

#[test]
fn fixed_profile_is_a_shuffled_ramp() {
    let p = fixed_profile(5, 9, 0.001, 3).unwrap();
    for row in p.rows() {
        let mut r = row.to_vec();
        r.sort_by(f64::total_cmp);
        assert!((r[0] - 0.001).abs() < 1e-15 && (r[8] - 0.004).abs() < 1e-15);
        for w in r.windows(2) {
            assert!((w[1] / w[0] - 4f64.powf(1.0 / 8.0)).abs() < 1e-9);
        }
    }
    assert_eq!(p, fixed_profile(5, 9, 0.001, 3).unwrap());
    let top = fixed_profile(1, 3, 0.2, 0).unwrap();
    assert!(top.as_flat().iter().all(|&m| m <= 0.5));
}

#[test]
fn wht_convolution_matches_direct_sum() {
    let mu = [0.1, 0.25, 0.05];
    let probs = flip_pattern_probs(&mu);
    let x: Vec<f64> = (0..8).map(|k| (k * k) as f64 - 3.0).collect();
    let mut buf = x.clone();
    xor_smooth(&mu, &mut buf, 1);
    for k in 0..8 {
        let direct: f64 = (0..8).map(|j| probs[k ^ j] * x[j]).sum();
        assert!((buf[k] - direct).abs() < 1e-12);
    }
}

#[test]
fn stats_objective_matches_direct_expected_distortion() {
    for seed in 0..5 {
        let data = synth_mixture(60, 3, 3, 4, seed).unwrap();
        let cb = random_codebook(3, 4, seed + 10);
        let mu = random_mu(3, 4, 0.0, 0.5, seed);
        let fast = mean_distortion(&cb, &mu, &data).unwrap();
        let slow = brute_mean(&cb, &mu, &data);
        assert!((fast - slow).abs() <= 1e-10 * slow, "{fast} vs {slow}");
    }
}

#[test]
fn refinement_gradient_matches_pointwise_gradients() {
    let data = synth_gaussian(40, 2, 2, 4).unwrap();
    let cb = random_codebook(2, 3, 5);
    let mu = random_mu(2, 3, 0.01, 0.4, 6);
    let stats = encode_stats(&cb, &data);
    let (d, grad) = distortion_and_grad(&stats.pattern_costs(&cb), &mu, data.len());
    assert!((d - brute_mean(&cb, &mu, &data)).abs() < 1e-10);
    let mut want = vec![0.0; 6];
    for s in 0..data.len() {
        for i in 0..2 {
            let g = distortion_grad_mu(data.sub(s, i), &cb, &mu[i * 3..(i + 1) * 3]).unwrap();
            for j in 0..3 {
                want[i * 3 + j] += g[j] / (data.len() * 2) as f64;
            }
        }
    }
    for (a, b) in grad.iter().zip(&want) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn zero_noise_centroid_step_is_kmeans() {
    let data = synth_mixture(80, 2, 2, 3, 1).unwrap();
    let cb = random_codebook(2, 3, 2);
    let next = centroid_step(&cb, &[0.0; 6], &data).unwrap();
    let mut sums = vec![[0.0, 0.0]; 8];
    let mut counts = [0usize; 8];
    for s in 0..data.len() {
        for i in 0..2 {
            let z = data.sub(s, i);
            let (k, _) = cb.nearest(z);
            counts[k] += 1;
            sums[k][0] += z[0];
            sums[k][1] += z[1];
        }
    }
    for k in 0..8 {
        if counts[k] > 0 {
            for d in 0..2 {
                assert!((next.codeword(k)[d] - sums[k][d] / counts[k] as f64).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn one_point_per_cell_lands_on_the_points() {
    let cb = Codebook::new(1, 2, vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
    let data = Dataset::new(1, 1, vec![0.1, 1.2, 2.3, 2.9]).unwrap();
    let next = centroid_step(&cb, &[0.0, 0.0], &data).unwrap();
    for (k, x) in [0.1, 1.2, 2.3, 2.9].iter().enumerate() {
        assert!((next.codeword(k)[0] - x).abs() < 1e-12);
    }
}

#[test]
fn two_cell_hand_example() {
    // Cells {-0.5, 0.2} and {0.7, 1.5}; sums -0.3 and 2.2, two points each.
    // c0 = (0.9 * -0.3 + 0.1 * 2.2) / 2 = -0.025
    // c1 = (0.1 * -0.3 + 0.9 * 2.2) / 2 = 0.975
    let cb = Codebook::new(1, 1, vec![vec![0.0], vec![1.0]]).unwrap();
    let data = Dataset::new(1, 1, vec![-0.5, 0.2, 0.7, 1.5]).unwrap();
    let next = centroid_step(&cb, &[0.1], &data).unwrap();
    assert!((next.codeword(0)[0] + 0.025).abs() < 1e-12);
    assert!((next.codeword(1)[0] - 0.975).abs() < 1e-12);
}

#[test]
fn dead_codewords_are_reseeded_at_the_worst_point() {
    let cb = Codebook::new(1, 1, vec![vec![0.0], vec![100.0]]).unwrap();
    let data = Dataset::new(1, 1, vec![-1.0, 0.5, 3.0]).unwrap();
    let next = centroid_step(&cb, &[0.0], &data).unwrap();
    assert!((next.codeword(0)[0] - 2.5 / 3.0).abs() < 1e-12);
    assert_eq!(next.codeword(1)[0], 3.0);
}

#[test]
fn lloyd_steps_never_increase_the_objective() {
    for seed in 0..6 {
        let data = synth_mixture(100, 3, 2, 5, seed).unwrap();
        let mu = random_mu(3, 4, 0.0, 0.3, seed + 1);
        let mut cb = random_codebook(2, 4, seed + 2);
        let mut prev = mean_distortion(&cb, &mu, &data).unwrap();
        for _ in 0..8 {
            let step = lloyd_step(&cb, &mu, &data).unwrap();
            assert!((step.objective_before - prev).abs() <= 1e-12 * prev);
            assert!(step.objective <= step.objective_before);
            prev = step.objective;
            cb = step.codebook;
        }
    }
}

#[test]
fn zero_noise_fixed_point_is_centroidal() {
    let data = synth_mixture(150, 2, 2, 6, 7).unwrap();
    let mu = [0.0; 6];
    let mut cb = random_codebook(2, 3, 8);
    for _ in 0..200 {
        let step = lloyd_step(&cb, &mu, &data).unwrap();
        let moved = step.codebook.as_flat() != cb.as_flat();
        cb = step.codebook;
        if !moved {
            break;
        }
    }
    let mut sums = vec![[0.0, 0.0]; 8];
    let mut counts = [0usize; 8];
    for s in 0..data.len() {
        for i in 0..2 {
            let z = data.sub(s, i);
            let (k, _) = cb.nearest(z);
            counts[k] += 1;
            sums[k][0] += z[0];
            sums[k][1] += z[1];
        }
    }
    for k in 0..8 {
        assert!(counts[k] > 0);
        for d in 0..2 {
            assert!((cb.codeword(k)[d] - sums[k][d] / counts[k] as f64).abs() < 1e-9);
        }
    }
}

#[test]
fn refinement_limits_and_trace() {
    let data = synth_mixture(80, 2, 2, 4, 3).unwrap();
    let cb = splitting_init(&data, 3, 4, 1).unwrap();
    let start = BitFlipProfile::uniform(2, 3, 0.2, 0.01).unwrap();

    let r = refine_profile(&cb, &start, &data, 0.0, 0.01, 0.05, 300).unwrap();
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.profile.as_flat().iter().all(|&m| (m - 0.01).abs() < 1e-9), "{:?}", r.profile.as_flat());

    let r = refine_profile(&cb, &start, &data, 1e6, 0.01, 0.05, 300).unwrap();
    let e = (-1.0f64).exp();
    assert!(r.profile.as_flat().iter().all(|&m| (m - e).abs() < 1e-3), "{:?}", r.profile.as_flat());

    for seed in 0..5 {
        let p = BitFlipProfile::from_flat(2, 3, random_mu(2, 3, 0.02, 0.5, seed), 0.02).unwrap();
        let r = refine_profile(&cb, &p, &data, 0.3, 0.02, 0.1, 50).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.profile.as_flat().iter().all(|&m| (0.02..=0.5).contains(&m)));
    }
}

fn small_config(profile_mode: ProfileMode, seed: u64) -> TrainConfig {
    TrainConfig {
        n_books: 3,
        dim: 2,
        bits: 4,
        n_sub: 4,
        mu_min: vec![0.001, 0.02, 0.05],
        lambda: default_lambda(3),
        max_iters: 15,
        tol: 1e-6,
        init: Init::Splitting,
        profile_mode,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn sequential_training_produces_an_ordered_bank() {
    let data = synth_gaussian(150, 4, 2, 11).unwrap();
    let out = train_sequential(&data, &small_config(ProfileMode::Fixed, 5)).unwrap();
    assert_eq!(out.bank.len(), 3);
    for v in 0..3 {
        let rows: Vec<_> = out.log.stage(v).collect();
        assert!(rows.len() >= 2);
        assert!(rows.windows(2).all(|w| w[1].objective <= w[0].objective));
    }
    let feats: Vec<&[f64]> = data.iter().collect();
    let table = build_table(&feats, &out.bank).unwrap();
    let mean = |v: usize| table.row(v).iter().sum::<f64>() / 4.0;
    assert!(mean(0) <= mean(2));
    let again = train_sequential(&data, &small_config(ProfileMode::Fixed, 5)).unwrap();
    assert_eq!(out.bank, again.bank);
    assert_eq!(out.log, again.log);
    let back = CodebookBank::from_json(&out.bank.to_json().unwrap()).unwrap();
    assert_eq!(back, out.bank);
    assert!(out.log.to_csv().starts_with("stage,iteration,objective\n"));
}

#[test]
fn refined_training_respects_floors() {
    let data = synth_gaussian(100, 4, 2, 12).unwrap();
    let mut cfg = small_config(ProfileMode::Refined, 1);
    cfg.init = Init::RandomSample;
    let out = train_sequential(&data, &cfg).unwrap();
    for v in 0..3 {
        let p = out.bank.profile(v);
        assert!(p.as_flat().iter().all(|&m| m >= cfg.mu_min[v] && m <= 0.5));
        let rows: Vec<_> = out.log.stage(v).collect();
        assert!(rows.windows(2).all(|w| w[1].objective <= w[0].objective));
    }
}

#[test]
fn single_stage_is_plain_channel_optimized_lloyd() {
    let data = synth_gaussian(80, 2, 2, 13).unwrap();
    let mut cfg = small_config(ProfileMode::Fixed, 2);
    cfg.n_books = 1;
    cfg.mu_min = vec![0.01];
    cfg.lambda = vec![0.125];
    cfg.max_iters = 3;
    cfg.n_sub = 2;
    let out = train_sequential(&data, &cfg).unwrap();
    let mu = out.bank.profile(0).as_flat().to_vec();
    let mut cb = splitting_init(&data, 4, cfg.split_iters, derive_seed(2, &[0xC0DE])).unwrap();
    for _ in 0..out.log.rows.len() - 1 {
        cb = lloyd_step(&cb, &mu, &data).unwrap().codebook;
    }
    assert_eq!(&cb, out.bank.codebook(0));
}

#[test]
fn config_validation() {
    let mut c = TrainConfig::default();
    assert!(c.validate().is_ok());
    c.mu_min = vec![0.1, 0.05, 0.2, 0.3, 0.4];
    assert!(c.validate().is_err());
    let mut c = TrainConfig::default();
    c.tol = 0.0;
    assert!(c.validate().is_err());
    let mut c = TrainConfig::default();
    c.n_books = 0;
    assert!(c.validate().is_err());
    assert!("splitting".parse::<Init>().is_ok() && "x".parse::<Init>().is_err());
    assert_eq!("refined".parse::<ProfileMode>().unwrap(), ProfileMode::Refined);
    let data = synth_gaussian(10, 3, 2, 0).unwrap();
    assert!(matches!(train_sequential(&data, &c), Err(Error::Config(_))));
    let c = small_config(ProfileMode::Fixed, 0);
    assert!(matches!(train_sequential(&data, &c), Err(Error::DimensionMismatch(_))));
}

#[test]
fn squared_distance_sanity_for_pool_layout() {
    let data = synth_gaussian(3, 2, 2, 1).unwrap();
    assert_eq!(squared_distance(data.sub(1, 1), &data.as_flat()[6..8]), 0.0);
}
