//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Run a subset with
//! `ACCEPTANCE_ONLY=1,5 cargo test --test acceptance`.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use mvqlink::allocator::{lut_range, Allocator, LinkBudget, Method, TransmissionPlan};
use mvqlink::channel::{ber_approx, ber_ceiling, ber_inverse, ModOrder, Modem};
use mvqlink::dataset::{synth_gaussian, synth_mixture, Dataset};
use mvqlink::distortion::{build_table, distortion_grad_mu, expected_distortion, DistortionTable};
use mvqlink::rng::rng_from_seed;
use mvqlink::sim::{compression_ratio, p_tot_for_snr, run_sweep, simulate_qam_ber, verify_ber, SweepConfig, SweepMethod, SweepReport};
use mvqlink::train::{default_lambda, lloyd_step, regularizer, train_sequential, Init, ProfileMode, TrainConfig, DEFAULT_MU_MIN};
use mvqlink::vq::{bits_to_index, index_to_bits, BitFlipProfile, Codebook, CodebookBank};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------------------
// Shared fixture: five-codebook bank trained on a Gaussian corpus with
// N = 128, D = 4, B = 9 and the reference floors.

struct Fixture {
    data: Dataset,
    bank: CodebookBank,
    table: DistortionTable,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let data = synth_gaussian(300, 128, 4, 2024).unwrap();
        let cfg = TrainConfig {
            max_iters: 10,
            tol: 1e-3,
            seed: 7,
            ..TrainConfig::default()
        };
        let bank = train_sequential(&data, &cfg).unwrap().bank;
        let rows: Vec<&[f64]> = data.iter().collect();
        let table = build_table(&rows, &bank).unwrap();
        Fixture { data, bank, table }
    })
}

const GRID: [f64; 7] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0];
const TRIALS: usize = 200;

fn sweeps() -> &'static [(SweepMethod, SweepReport, f64)] {
    static S: OnceLock<Vec<(SweepMethod, SweepReport, f64)>> = OnceLock::new();
    S.get_or_init(|| {
        let f = fixture();
        let alloc = Allocator::new(&f.bank, &f.table, 6).unwrap();
        [SweepMethod::Jcamp, SweepMethod::Jcap, SweepMethod::Baseline, SweepMethod::Lut]
            .into_iter()
            .map(|method| {
                let config = SweepConfig {
                    snr_db: GRID.to_vec(),
                    trials: TRIALS,
                    method,
                    seed: 99,
                    ..SweepConfig::default()
                };
                let t = Instant::now();
                let report = run_sweep(&f.data, &alloc, &config).unwrap();
                (method, report, t.elapsed().as_secs_f64())
            })
            .collect()
    })
}

fn sweep_of(method: SweepMethod) -> &'static SweepReport {
    &sweeps().iter().find(|(m, _, _)| *m == method).unwrap().1
}

// ---------------------------------------------------------------------------

fn ber_matching() -> Outcome {
    let start = Instant::now();
    let f = fixture();
    let alloc = Allocator::new(&f.bank, &f.table, 6).unwrap();
    let nb = f.bank.total_bits() as f64;
    let budget = LinkBudget::new(nb, 4, 6).unwrap();
    let (lo, hi) = lut_range(&alloc, &budget).unwrap();
    let mut judged = 0;
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    let mut notes = Vec::new();
    for (k, frac) in [0.2, 0.5, 0.8].into_iter().enumerate() {
        let snr = lo + frac * (hi - lo);
        let gamma = 10f64.powf(snr / 10.0);
        let plan = alloc.jcamp(gamma, &budget).unwrap();
        if plan.scaled {
            return outcome(false, format!("plan at {snr:.2} dB unexpectedly scaled"));
        }
        let checks = verify_ber(&plan, gamma, 10_000_000, 1000 + k as u64).unwrap();
        for c in checks.iter().filter(|c| c.target >= 1e-3) {
            judged += 1;
            worst = worst.max(c.relative_error());
            if c.relative_error() > 0.15 {
                bad += 1;
            }
        }
        notes.push(format!("{snr:.2} dB"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad == 0 && judged > 0 && secs <= 300.0,
        format!(
            "{judged} groups with target >= 1e-3 at [{}], 1e7 bits each: {bad} outside 15% (worst {:.2}%), {secs:.0}s",
            notes.join(", "),
            100.0 * worst
        ),
    )
}

fn method_ordering() -> Outcome {
    let s = sweeps();
    let secs: f64 = s.iter().filter(|(m, _, _)| *m != SweepMethod::Lut).map(|x| x.2).sum();
    let (a, b, c) = (sweep_of(SweepMethod::Jcamp), sweep_of(SweepMethod::Jcap), sweep_of(SweepMethod::Baseline));
    let mut good = 0;
    let mut rows = Vec::new();
    for k in 0..GRID.len() {
        let (x, y, z) = (
            a.points[k].expected_distortion,
            b.points[k].expected_distortion,
            c.points[k].expected_distortion,
        );
        if x <= y && y <= z {
            good += 1;
        }
        rows.push(format!("{}dB {x:.2}/{y:.2}/{z:.2}", GRID[k]));
    }
    outcome(
        good >= 6 && secs <= 600.0,
        format!("jcamp <= jcap <= baseline at {good}/7 points ({}), {TRIALS} trials/point, {secs:.0}s", rows.join("; ")),
    )
}

fn lut_fidelity() -> Outcome {
    let (exact, lut) = (sweep_of(SweepMethod::Jcamp), sweep_of(SweepMethod::Lut));
    let mut worst: f64 = 0.0;
    for k in 0..GRID.len() {
        let (e, l) = (exact.points[k].expected_distortion, lut.points[k].expected_distortion);
        worst = worst.max((l - e).abs() / e);
    }
    outcome(worst <= 0.01, format!("8-bit LUT vs exact jcamp: worst relative gap {:.3}% over 7 points", 100.0 * worst))
}

fn usage_trend() -> Outcome {
    let r = sweep_of(SweepMethod::Jcamp);
    let idx: Vec<f64> = r.points.iter().map(|p| p.mean_codebook_index).collect();
    let inversions: Vec<f64> = idx.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    let pass = inversions.is_empty() || (inversions.len() == 1 && inversions[0] <= 0.05);
    let shown: Vec<String> = idx.iter().map(|x| format!("{x:.3}")).collect();
    outcome(pass, format!("mean codebook index over ascending SNR: [{}]", shown.join(", ")))
}

// Exhaustive oracle with the same feasibility rule: every bit at order R,
// sum of ber_inverse(mu; R) / R at gain gamma within P_tot.
fn exhaustive(bank: &CodebookBank, table: &DistortionTable, gamma: f64, budget: &LinkBudget) -> Option<f64> {
    let (n, b, nv) = (bank.n_sub(), bank.bits() as usize, bank.len());
    let r = ModOrder::new(budget.rate).unwrap();
    let cost = |v: usize, i: usize| -> f64 {
        (0..b)
            .map(|j| {
                let mu = bank.profile(v).get(i, j);
                if mu >= ber_ceiling(r) {
                    0.0
                } else {
                    ber_inverse(mu, r, gamma).unwrap() / r.bits() as f64
                }
            })
            .sum()
    };
    let mut best: Option<f64> = None;
    let mut v = vec![0usize; n];
    loop {
        let power: f64 = (0..n).map(|i| cost(v[i], i)).sum();
        if power <= budget.p_tot {
            let d = table.total(&v);
            best = Some(best.map_or(d, |x: f64| x.min(d)));
        }
        let mut k = 0;
        while k < n {
            v[k] += 1;
            if v[k] < nv {
                break;
            }
            v[k] = 0;
            k += 1;
        }
        if k == n {
            return best;
        }
    }
}

fn random_bank(rng: &mut impl Rng, n: usize, nv: usize, bits: u32) -> (CodebookBank, DistortionTable) {
    let mut profiles = Vec::new();
    let mut floor: f64 = rng.random_range(1e-4..1e-3);
    for _ in 0..nv {
        let top = (floor * rng.random_range(3.0..8.0)).min(0.45);
        let mu: Vec<f64> = (0..n * bits as usize).map(|_| rng.random_range(floor..top)).collect();
        profiles.push(BitFlipProfile::from_flat(n, bits, mu, floor).unwrap());
        floor = top;
    }
    let codebooks = (0..nv)
        .map(|_| Codebook::from_flat(1, bits, (0..1usize << bits).map(|k| k as f64).collect()).unwrap())
        .collect();
    let bank = CodebookBank::new(codebooks, profiles, default_lambda(nv)).unwrap();
    let mut rows = vec![vec![0.0; n]; nv];
    for i in 0..n {
        let mut d = rng.random_range(0.01..0.1);
        for row in rows.iter_mut() {
            row[i] = d;
            d += rng.random_range(0.005..0.2);
        }
    }
    (bank, DistortionTable::new(rows).unwrap())
}

fn oracle_equivalence() -> Outcome {
    let mut rng = rng_from_seed(5);
    let mut worst: f64 = 0.0;
    let mut within = 0;
    let mut count = 0;
    while count < 20 {
        let n = rng.random_range(2..=6);
        let nv = rng.random_range(2..=3);
        let bits = rng.random_range(1..=3);
        if (n * bits as usize) % 2 != 0 {
            continue;
        }
        let (bank, table) = random_bank(&mut rng, n, nv, bits);
        let gamma = rng.random_range(0.3..3.0);
        let alloc = Allocator::new(&bank, &table, 2).unwrap();
        let r = ModOrder::new(2).unwrap();
        let unit = |v: usize| {
            (0..n)
                .flat_map(|i| (0..bits as usize).map(move |j| (i, j)))
                .map(|(i, j)| ber_inverse(bank.profile(v).get(i, j), r, gamma).unwrap() / 2.0)
                .sum::<f64>()
        };
        let (lo, hi) = (unit(nv - 1), unit(0));
        let p_tot = lo * (hi / lo).powf(rng.random_range(0.05..0.95));
        let budget = LinkBudget::new(p_tot, 2, 2).unwrap();
        let plan = alloc.jcap(gamma, &budget).unwrap();
        let Some(opt) = exhaustive(&bank, &table, gamma, &budget) else { continue };
        count += 1;
        let gap = (plan.expected_distortion(&table) - opt) / opt;
        worst = worst.max(gap);
        if gap <= 0.05 + 1e-12 && !plan.scaled {
            within += 1;
        }
    }
    outcome(
        within == 20,
        format!("jcap within 5% of the exhaustive optimum on {within}/20 instances (worst gap {:.2}%)", 100.0 * worst),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = rng_from_seed(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pts: Vec<f64> = (0..512 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cb = Codebook::from_flat(4, 9, pts).unwrap();
        let sub: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mu: Vec<f64> = (0..9).map(|_| rng.random_range(0.001..0.4)).collect();
        let g = distortion_grad_mu(&sub, &cb, &mu).unwrap();
        for j in 0..9 {
            let h = 1e-4;
            let mut up = mu.clone();
            let mut dn = mu.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (expected_distortion(&sub, &cb, &up).unwrap() - expected_distortion(&sub, &cb, &dn).unwrap()) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(fd.abs()));
        }
    }
    outcome(worst <= 1e-5, format!("100 instances (D=4, B=9): worst relative gap to central differences {worst:.2e}"))
}

fn lloyd_monotonicity() -> Outcome {
    let mut increases = 0;
    let mut steps = 0;
    for seed in 0..10u64 {
        let data = synth_mixture(200, 8, 4, 12, 100 + seed).unwrap();
        let cfg = TrainConfig {
            n_books: 3,
            dim: 4,
            bits: 6,
            n_sub: 8,
            mu_min: DEFAULT_MU_MIN[..3].to_vec(),
            lambda: default_lambda(3),
            max_iters: 12,
            tol: 1e-7,
            init: if seed % 2 == 0 { Init::Splitting } else { Init::RandomSample },
            profile_mode: if seed % 3 == 0 { ProfileMode::Refined } else { ProfileMode::Fixed },
            seed,
            ..TrainConfig::default()
        };
        let log = train_sequential(&data, &cfg).unwrap().log;
        for v in 0..3 {
            let rows: Vec<_> = log.stage(v).collect();
            for w in rows.windows(2) {
                steps += 1;
                if w[1].objective > w[0].objective {
                    increases += 1;
                }
            }
        }
    }
    // Zero-noise fixed point.
    let data = synth_mixture(300, 4, 2, 10, 1).unwrap();
    let mu = vec![0.0; 4 * 4];
    let mut cb = Codebook::from_flat(2, 4, data.as_flat()[..32].to_vec()).unwrap();
    for _ in 0..500 {
        let next = lloyd_step(&cb, &mu, &data).unwrap().codebook;
        let done = next == cb;
        cb = next;
        if done {
            break;
        }
    }
    let mut sums = vec![0.0; 32];
    let mut counts = vec![0usize; 16];
    for z in data.as_flat().chunks_exact(2) {
        let k = (0..16)
            .min_by(|&a, &b| {
                let da: f64 = cb.codeword(a).iter().zip(z).map(|(x, y)| (x - y) * (x - y)).sum();
                let db: f64 = cb.codeword(b).iter().zip(z).map(|(x, y)| (x - y) * (x - y)).sum();
                da.total_cmp(&db)
            })
            .unwrap();
        counts[k] += 1;
        sums[2 * k] += z[0];
        sums[2 * k + 1] += z[1];
    }
    let mut centroid_gap: f64 = 0.0;
    for k in 0..16 {
        if counts[k] > 0 {
            for d in 0..2 {
                centroid_gap = centroid_gap.max((cb.codeword(k)[d] - sums[2 * k + d] / counts[k] as f64).abs());
            }
        }
    }
    outcome(
        increases == 0 && centroid_gap <= 1e-9,
        format!("10 runs, {steps} logged steps, {increases} increases; zero-noise centroid gap {centroid_gap:.1e}"),
    )
}

fn conservation() -> Outcome {
    let mut fails = Vec::new();
    for k in 0..512 {
        let bits = index_to_bits(k, 9).unwrap();
        if bits_to_index(&bits).unwrap() != k {
            fails.push(format!("index {k}"));
        }
    }
    for m in [2, 4, 6] {
        let modem = Modem::new(ModOrder::new(m).unwrap());
        for label in 0..1u32 << m {
            if modem.demap(modem.map(label)) != label {
                fails.push(format!("m={m} label {label}"));
            }
        }
    }
    let mut rng = rng_from_seed(8);
    let mut runs = 0;
    while runs < 1000 {
        let n = rng.random_range(1..=8);
        let nv = rng.random_range(1..=4);
        let bits = [2u32, 3, 4, 6][rng.random_range(0..4)];
        let (rate, m_max) = [(2, 2), (2, 4), (2, 6), (4, 4), (4, 6), (6, 6)][rng.random_range(0..6)];
        if (n * bits as usize) % rate as usize != 0 {
            continue;
        }
        let (bank, table) = random_bank(&mut rng, n, nv, bits);
        let alloc = Allocator::new(&bank, &table, m_max).unwrap();
        let budget = LinkBudget::new(10f64.powf(rng.random_range(-1.0..3.0)), rate, m_max).unwrap();
        let gamma = 10f64.powf(rng.random_range(-1.0..1.0));
        let method = [Method::Jcamp, Method::Jcap, Method::Baseline][rng.random_range(0..3)];
        let plan: TransmissionPlan = alloc.plan(method, gamma, &budget).unwrap();
        runs += 1;
        let nb = n * bits as usize;
        let total: f64 = plan.symbols.iter().map(|s| s.p).sum();
        let bit_sum: usize = plan.symbols.iter().map(|s| s.m.bits() as usize).sum();
        let mut per_order = [0usize; 8];
        let mut seen = vec![0u8; nb];
        for s in &plan.symbols {
            per_order[s.m.bits() as usize] += s.group.len();
            for &(i, j) in &s.group {
                seen[i * bits as usize + j] += 1;
            }
        }
        let ok = (total - budget.p_tot).abs() <= 1e-9 * budget.p_tot
            && bit_sum == nb
            && plan.symbols.len() == nb / rate as usize
            && per_order.iter().enumerate().all(|(m, &c)| m == 0 || c % m == 0)
            && seen.iter().all(|&c| c == 1)
            && plan.check(n, bits as usize, &budget, 1e-9).is_ok();
        if !ok {
            fails.push(format!("{method} n={n} bits={bits} R={rate}"));
        }
    }
    outcome(
        fails.is_empty(),
        format!(
            "bits<->index (B=9, 512 indices), modem round trip (m=2,4,6), {runs} allocator runs: {} failures{}",
            fails.len(),
            fails.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

fn ber_formula_fidelity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for m in [2, 4, 6] {
        let order = ModOrder::new(m).unwrap();
        for (k, target) in [1e-4, 1e-3, 1e-2, 0.05, 0.18].into_iter().enumerate() {
            let snr = ber_inverse(target, order, 1.0).unwrap();
            let approx = ber_approx(snr, order, 1.0);
            let bits = (4000.0 / approx).ceil() as u64;
            let mc = simulate_qam_ber(order, snr, bits.max(200_000), 50 + 10 * m as u64 + k as u64).unwrap();
            worst = worst.max((mc - approx).abs() / approx);
            cases += 1;
        }
    }
    outcome(worst <= 0.10, format!("{cases} Monte Carlo points, BER 1e-4..0.18: worst relative gap {:.2}%", 100.0 * worst))
}

fn spot_values() -> Outcome {
    let e = ber_approx(2.0, ModOrder::new(2).unwrap(), 1.0);
    let x = 1.0 / std::f64::consts::E;
    let r = regularizer(&[x; 9]).unwrap();
    let is_min = [0.9 * x, 0.99 * x, 1.01 * x, 1.1 * x].iter().all(|&y| regularizer(&[y; 9]).unwrap() > r);
    let rho = compression_ratio(1152, 3, 32, 32).unwrap();
    let p_ok = (p_tot_for_snr(0.0, 1.0, 1152).unwrap() - 1152.0).abs() < 1e-9;
    let pass = (e - 0.078_649_6).abs() <= 1e-6 && (r + (-1.0f64).exp()).abs() <= 1e-9 && rho == 3.0 / 64.0 && p_ok && is_min;
    outcome(pass, format!("BER(pγ=2, m=2) = {e:.7}, regularizer(1/e) = {r:.10}, ρ(1152; 3,32,32) = {rho}"))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "BER matching", ber_matching),
        (2, "method ordering", method_ordering),
        (3, "lookup-table fidelity", lut_fidelity),
        (4, "codebook-usage trend", usage_trend),
        (5, "small-instance oracle", oracle_equivalence),
        (6, "analytic gradient", gradient_check),
        (7, "Lloyd monotonicity", lloyd_monotonicity),
        (8, "conservation and round trips", conservation),
        (9, "BER formula fidelity", ber_formula_fidelity),
        (10, "formula spot values", spot_values),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (k, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        println!(
            "{} criterion {k:>2} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
