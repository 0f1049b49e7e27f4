//! Command-line front end: synth, train, table, plan, lut, sweep, verify-ber.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvqlink::allocator::{build_lut, lut_range, Allocator, LinkBudget, Method, TransmissionPlan};
use mvqlink::config::{sweep_config, train_config, KeyValues};
use mvqlink::dataset::{Dataset, SynthSpec};
use mvqlink::distortion::{build_table, DistortionTable};
use mvqlink::sim::{ber_checks_to_csv, p_tot_for_snr, sweep, verify_ber};
use mvqlink::train::train_sequential;
use mvqlink::vq::CodebookBank;
use mvqlink::Result;

#[derive(Parser)]
#[command(name = "mvqlink", version, about = "Multi-codebook VQ over adaptive QAM links")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic MVQF feature file.
    Synth(SynthArgs),
    /// Train a codebook bank on an MVQF feature file.
    Train(TrainArgs),
    /// Build the distortion table of a bank over a dataset.
    Table(TableArgs),
    /// Solve one allocation problem and write the plan as JSON.
    Plan(PlanArgs),
    /// Precompute plans over a quantized instantaneous-SNR grid.
    Lut(LutArgs),
    /// Monte Carlo SNR sweep driven by a key = value config file.
    Sweep(SweepArgs),
    /// Simulate every symbol of a plan and compare BER with its target.
    VerifyBer(VerifyArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// gaussian | mixture
    #[arg(long, default_value = "gaussian")]
    kind: String,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 128)]
    n_sub: usize,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Mixture components.
    #[arg(long, default_value_t = 16)]
    components: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// key = value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV (stage, iteration, objective).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    n_books: Option<usize>,
    #[arg(long)]
    bits: Option<u32>,
    /// Comma-separated floors, one per codebook.
    #[arg(long)]
    mu_min: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// splitting | random-sample
    #[arg(long)]
    init: Option<String>,
    /// fixed | refined
    #[arg(long)]
    profile_mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Accepted for uniformity; table construction is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    table: PathBuf,
    /// Total power budget; defaults to N * B (0 dB normalized SNR).
    #[arg(long)]
    p_tot: Option<f64>,
    /// Normalized SNR in dB, an alternative to --p-tot.
    #[arg(long, conflicts_with = "p_tot")]
    budget_snr_db: Option<f64>,
    #[arg(long, default_value_t = 4)]
    rate: u32,
    #[arg(long, default_value_t = 6)]
    m_max: u32,
    /// Accepted for uniformity; planning is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    /// jcamp | jcap | baseline
    #[arg(long, default_value = "jcamp")]
    method: String,
    /// Channel gain-to-noise ratio.
    #[arg(long, conflicts_with = "snr_db")]
    gamma: Option<f64>,
    /// Instantaneous SNR 10 log10(P_tot gamma / (N B)); sets gamma.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LutArgs {
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value = "jcamp")]
    method: String,
    /// Lower SNR edge; defaults to where all-(V-1) becomes feasible.
    #[arg(long)]
    lo_db: Option<f64>,
    /// Upper SNR edge; defaults to where all-0 becomes feasible.
    #[arg(long)]
    hi_db: Option<f64>,
    #[arg(long, default_value_t = 8)]
    bits: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report CSV; the config is written next to it as <out>.json.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated normalized SNR grid in dB.
    #[arg(long)]
    snr_db: Option<String>,
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// jcamp | jcap | baseline | lut
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rate: Option<u32>,
    #[arg(long)]
    m_max: Option<u32>,
    #[arg(long)]
    lut_bits: Option<u32>,
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Gain the plan was computed for.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Simulated bits per symbol group.
    #[arg(long, default_value_t = 10_000_000)]
    bits: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Groups with targets below this are listed but not judged.
    #[arg(long, default_value_t = 1e-3)]
    min_target: f64,
    /// Relative tolerance for the summary verdict.
    #[arg(long, default_value_t = 0.15)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_kv(path: &Option<PathBuf>) -> Result<KeyValues> {
    match path {
        Some(p) => KeyValues::load(p),
        None => Ok(KeyValues::default()),
    }
}

fn resolve_budget(args: &BudgetArgs, bank: &CodebookBank) -> Result<LinkBudget> {
    let nb = bank.total_bits();
    let p_tot = match (args.p_tot, args.budget_snr_db) {
        (Some(p), _) => p,
        (None, Some(s)) => p_tot_for_snr(s, 1.0, nb)?,
        (None, None) => nb as f64,
    };
    LinkBudget::new(p_tot, args.rate, args.m_max)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Synth(a) => {
            let spec = match a.kind.as_str() {
                "gaussian" => SynthSpec::Gaussian { count: a.count, n_sub: a.n_sub, dim: a.dim, seed: a.seed },
                "mixture" => SynthSpec::Mixture {
                    count: a.count,
                    n_sub: a.n_sub,
                    dim: a.dim,
                    components: a.components,
                    seed: a.seed,
                },
                other => return Err(mvqlink::Error::Config(format!("unknown synth kind '{other}'"))),
            };
            spec.generate()?.save(&a.out)?;
            println!("wrote {} feature vectors to {}", a.count, a.out.display());
        }
        Cmd::Train(a) => {
            let data = Dataset::load(&a.data)?;
            let mut kv = load_kv(&a.config)?;
            if !kv.contains("n_sub") {
                kv.set("n_sub", data.n_sub());
            }
            if !kv.contains("dim") {
                kv.set("dim", data.dim());
            }
            kv.set_opt("n_books", a.n_books);
            kv.set_opt("bits", a.bits);
            kv.set_opt("mu_min", a.mu_min);
            kv.set_opt("lambda", a.lambda);
            kv.set_opt("max_iters", a.max_iters);
            kv.set_opt("tol", a.tol);
            kv.set_opt("init", a.init);
            kv.set_opt("profile_mode", a.profile_mode);
            kv.set_opt("seed", a.seed);
            let cfg = train_config(&kv)?;
            let out = train_sequential(&data, &cfg)?;
            out.bank.save(&a.out)?;
            if let Some(log) = &a.log {
                out.log.save(log)?;
            }
            for v in 0..out.bank.len() {
                if let Some(last) = out.log.stage(v).last() {
                    println!("codebook {v}: {} iterations, objective {:.6}", last.iteration, last.objective);
                }
            }
            println!("wrote bank to {}", a.out.display());
        }
        Cmd::Table(a) => {
            let data = Dataset::load(&a.data)?;
            let bank = CodebookBank::load(&a.bank)?;
            data.check_bank(&bank)?;
            let rows: Vec<&[f64]> = data.iter().collect();
            let table = build_table(&rows, &bank)?;
            table.save(&a.out)?;
            for v in 0..table.n_books() {
                let mean = table.row(v).iter().sum::<f64>() / table.n_sub() as f64;
                println!("codebook {v}: mean distortion per sub-vector {mean:.6}");
            }
        }
        Cmd::Plan(a) => {
            let bank = CodebookBank::load(&a.budget.bank)?;
            let table = DistortionTable::load(&a.budget.table)?;
            let budget = resolve_budget(&a.budget, &bank)?;
            let alloc = Allocator::new(&bank, &table, budget.m_max)?;
            let gamma = match (a.gamma, a.snr_db) {
                (Some(g), _) => g,
                (None, Some(s)) => 10f64.powf(s / 10.0) * bank.total_bits() as f64 / budget.p_tot,
                (None, None) => 1.0,
            };
            let method: Method = a.method.parse()?;
            let plan = alloc.plan(method, gamma, &budget)?;
            std::fs::write(&a.out, plan.to_json()?)?;
            println!(
                "{method} at gamma {gamma:.6}, P_tot {:.4}: {} symbols, mean codebook index {:.3}, expected distortion {:.6}{}",
                budget.p_tot,
                plan.symbols.len(),
                plan.mean_codebook_index(),
                plan.expected_distortion(&table),
                if plan.scaled { " (infeasible, powers scaled)" } else { "" }
            );
        }
        Cmd::Lut(a) => {
            let bank = CodebookBank::load(&a.budget.bank)?;
            let table = DistortionTable::load(&a.budget.table)?;
            let budget = resolve_budget(&a.budget, &bank)?;
            let alloc = Allocator::new(&bank, &table, budget.m_max)?;
            let (lo, hi) = match (a.lo_db, a.hi_db) {
                (Some(l), Some(h)) => (l, h),
                (l, h) => {
                    let (dl, dh) = lut_range(&alloc, &budget)?;
                    (l.unwrap_or(dl), h.unwrap_or(dh))
                }
            };
            let lut = build_lut(&alloc, &budget, lo, hi, a.bits, a.method.parse()?)?;
            lut.save(&a.out)?;
            println!("{} cells over [{lo:.4}, {hi:.4}] dB written to {}", lut.cells(), a.out.display());
        }
        Cmd::Sweep(a) => {
            let mut kv = load_kv(&a.config)?;
            kv.set_opt("snr_db", a.snr_db);
            kv.set_opt("channel", a.channel);
            kv.set_opt("trials", a.trials);
            kv.set_opt("method", a.method);
            kv.set_opt("seed", a.seed);
            kv.set_opt("rate", a.rate);
            kv.set_opt("m_max", a.m_max);
            kv.set_opt("lut_bits", a.lut_bits);
            kv.set_opt("bank", a.bank.map(|p| p.display().to_string()));
            kv.set_opt("table", a.table.map(|p| p.display().to_string()));
            kv.set_opt("dataset", a.dataset.map(|p| p.display().to_string()));
            let cfg = sweep_config(&kv)?;
            let report = sweep(&cfg)?;
            report.save(&a.out)?;
            for p in &report.points {
                println!(
                    "{:>7.2} dB  mse {:.5}  expected distortion {:.5}  mean index {:.3}  scaled {:.3}",
                    p.snr_db, p.mse, p.expected_distortion, p.mean_codebook_index, p.scaled_fraction
                );
            }
        }
        Cmd::VerifyBer(a) => {
            let plan = TransmissionPlan::from_json(&std::fs::read_to_string(&a.plan)?)?;
            let checks = verify_ber(&plan, a.gamma, a.bits, a.seed)?;
            let csv = ber_checks_to_csv(&checks);
            match &a.out {
                Some(p) => std::fs::write(p, &csv)?,
                None => print!("{csv}"),
            }
            let judged: Vec<_> = checks.iter().filter(|c| c.target >= a.min_target).collect();
            let worst = judged.iter().map(|c| c.relative_error()).fold(0.0, f64::max);
            let bad = judged.iter().filter(|c| c.relative_error() > a.tol).count();
            eprintln!(
                "{} of {} groups with target >= {:e} within {:.0}% (worst {:.2}%)",
                judged.len() - bad,
                judged.len(),
                a.min_target,
                100.0 * a.tol,
                100.0 * worst
            );
            if plan.scaled {
                eprintln!("note: plan has scaled powers; targets are not expected to match");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
