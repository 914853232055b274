//! Command-line driver for training and evaluating the learned auction.
//!
//! Exit codes: 0 success, 2 configuration or file-format error, 3 numeric or
//! training error, 4 verification failure, 5 i/o error.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use auction_core::baselines::{
    empirical_regret, spa_expected_revenue, winning_prob_sweep, write_sweep,
};
use auction_core::mechanism::{
    checkpoint_string, hard_mechanism, read_checkpoint, NetParams,
};
use auction_core::training::{train, write_trace};
use auction_core::valuation::{generate_dataset_stream, ValuationModel};
use auction_core::AuctionError;

use config::ExperimentConfig;

const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERIC: i32 = 3;
const EXIT_VERIFY: i32 = 4;
const EXIT_IO: i32 = 5;

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<AuctionError> for CliError {
    fn from(e: AuctionError) -> Self {
        let code = match &e {
            AuctionError::Config(_) | AuctionError::Usage(_) | AuctionError::Format(_) => {
                EXIT_CONFIG
            }
            AuctionError::Numeric(_) | AuctionError::Training { .. } => EXIT_NUMERIC,
            AuctionError::Io(_) => EXIT_IO,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: format!("i/o error: {e}") }
    }
}

type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(name = "auction", version, about = "Learned single-item auction for edge compute")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a mechanism from an experiment config and write checkpoint,
    /// revenue trace, and run manifest.
    Train {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full benchmark grid (N in {10,15,20}, capacity ranges
    /// U[0.2,0.5] and U[0.4,0.7], sharpness in {1,2}) and write a summary
    /// comparing learned revenue against the second-price baseline.
    PaperGrid {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Monte Carlo samples for the second-price baseline.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    /// Estimate miner 1's winning probability as its capacity varies.
    Sweep {
        /// Experiment config supplying the competitor valuation model.
        #[arg(long)]
        config: PathBuf,
        /// Trained checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo samples per grid point.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 0.05)]
        c1_min: f64,
        #[arg(long, default_value_t = 0.5)]
        c1_max: f64,
        #[arg(long, default_value_t = 10)]
        c1_steps: usize,
    },
    /// Check a trained checkpoint for truthfulness and individual
    /// rationality on sampled instances. Exits nonzero if either property
    /// is violated beyond 1e-9.
    Verify {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Experiment config supplying the valuation model for instances.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of sampled valuation profiles.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Deviation bids per profile.
        #[arg(long, default_value_t = 200)]
        grid: usize,
        /// Corrupts one bidder's transform before checking. Used to test
        /// that the checker itself detects broken mechanisms.
        #[arg(long, hide = true)]
        inject_negative_weight: bool,
    },
    /// Monte Carlo estimate of second-price auction revenue for a model.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Optional CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out, seed } => cmd_train(&config, &out, seed),
        Command::PaperGrid { out, seed, samples } => cmd_paper_grid(&out, seed, samples),
        Command::Sweep { config, checkpoint, out, seed, samples, c1_min, c1_max, c1_steps } => {
            cmd_sweep(&config, &checkpoint, &out, seed, samples, c1_min, c1_max, c1_steps)
        }
        Command::Verify { checkpoint, config, seed, samples, grid, inject_negative_weight } => {
            cmd_verify(&checkpoint, &config, seed, samples, grid, inject_negative_weight)
        }
        Command::Baseline { config, seed, samples, out } => {
            cmd_baseline(&config, seed, samples, out.as_deref())
        }
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Header lines written (as `# ` comments) at the top of every output file.
fn provenance(config_text: &str, seed: u64) -> Vec<String> {
    vec![
        format!("tool=auction version={}", env!("CARGO_PKG_VERSION")),
        format!("config_sha256={}", sha256_hex(config_text)),
        format!("seed={seed}"),
    ]
}

fn load_config(path: &Path) -> Result<(ExperimentConfig, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    let config = ExperimentConfig::parse(&text)
        .map_err(|e| CliError::config(format!("{}: {:#}", path.display(), e)))?;
    Ok((config, text))
}

fn write_with_header(path: &Path, provenance: &[String], body: &str) -> CliResult {
    let mut out = String::new();
    for line in provenance {
        writeln!(out, "# {line}").expect("string write");
    }
    out.push_str(body);
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_train(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> CliResult {
    let (experiment, config_text) = load_config(config_path)?;
    std::fs::create_dir_all(out_dir)?;
    run_training(&experiment, &config_text, out_dir, seed)?;
    Ok(())
}

/// Trains one scenario and writes its checkpoint, trace, and manifest.
/// Returns the trained parameters and the final trace point.
fn run_training(
    experiment: &ExperimentConfig,
    config_text: &str,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<(NetParams, f64, f64), CliError> {
    let model = experiment.model()?;
    let net = experiment.net_config()?;
    let train_config = experiment.train_config(seed);
    let header = provenance(config_text, train_config.seed);

    let (params, trace) = train(&train_config, net, &model)?;
    let last = trace.final_point().expect("trace always has the initial point");
    let (soft, hard) = (last.test_revenue_soft, last.test_revenue_hard);

    let scenario = &experiment.scenario;
    write_with_header(
        &out_dir.join(format!("{scenario}_checkpoint.txt")),
        &header,
        &checkpoint_string(&params),
    )?;
    write_trace(&out_dir.join(format!("{scenario}_trace.csv")), &trace, &header)?;

    let mut manifest = String::new();
    writeln!(manifest, "scenario={scenario}").expect("string write");
    writeln!(manifest, "{}", experiment.canonical_text()).expect("string write");
    writeln!(manifest, "seed={}", train_config.seed).expect("string write");
    writeln!(manifest, "final_iteration={}", last.iteration).expect("string write");
    writeln!(manifest, "test_revenue_soft={soft}").expect("string write");
    writeln!(manifest, "test_revenue_hard={hard}").expect("string write");
    write_with_header(&out_dir.join(format!("{scenario}_manifest.txt")), &header, &manifest)?;

    println!("{scenario}: test revenue soft={soft:.4} hard={hard:.4}");
    Ok((params, soft, hard))
}

fn cmd_paper_grid(out_dir: &Path, seed: u64, samples: usize) -> CliResult {
    std::fs::create_dir_all(out_dir)?;
    let mut rows: Vec<String> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    let mut cell_index = 0u64;
    for &n in &[10usize, 15, 20] {
        for &c_range in &[(0.2, 0.5), (0.4, 0.7)] {
            let model = ValuationModel::new(0.0, 1.0, c_range.0, c_range.1)?;
            let spa = spa_expected_revenue(&model, n, samples, seed)?;
            for &kappa in &[1.0, 2.0] {
                let cell = ExperimentConfig::grid_cell(n, c_range, kappa, seed + cell_index);
                cell_index += 1;
                let config_text = cell.canonical_text();
                match run_training(&cell, &config_text, out_dir, None) {
                    Ok((_, soft, hard)) => {
                        rows.push(format!("{},{},{},{}", cell.scenario, spa.mean, soft, hard));
                    }
                    Err(e) => {
                        eprintln!("cell {} failed: {}", cell.scenario, e.message);
                        failures.push(cell.scenario.clone());
                    }
                }
            }
        }
    }
    let mut body = String::from("scenario,spa_revenue,dl_revenue_soft,dl_revenue_hard\n");
    for row in &rows {
        body.push_str(row);
        body.push('\n');
    }
    let header = provenance(&format!("paper-grid samples={samples}"), seed);
    write_with_header(&out_dir.join("summary.csv"), &header, &body)?;
    if !failures.is_empty() {
        return Err(CliError {
            code: EXIT_NUMERIC,
            message: format!("{} grid cell(s) failed: {}", failures.len(), failures.join(", ")),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    config_path: &Path,
    checkpoint_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    samples: usize,
    c1_min: f64,
    c1_max: f64,
    c1_steps: usize,
) -> CliResult {
    let (experiment, config_text) = load_config(config_path)?;
    let model = experiment.model()?;
    let params = read_checkpoint(checkpoint_path)?;
    if c1_steps < 2 {
        return Err(CliError::config("c1-steps must be >= 2"));
    }
    let grid: Vec<f64> = (0..c1_steps)
        .map(|i| c1_min + (c1_max - c1_min) * i as f64 / (c1_steps - 1) as f64)
        .collect();
    let seed = seed.unwrap_or(experiment.train.seed);
    let curve = winning_prob_sweep(&params, &model, &grid, samples, seed)?;
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{}_sweep.csv", experiment.scenario));
    write_sweep(&path, &curve, &provenance(&config_text, seed))?;
    for p in &curve.points {
        println!("c_1={:.3} win_prob={:.4} se={:.4}", p.c1, p.win_prob, p.std_error);
    }
    Ok(())
}

fn cmd_verify(
    checkpoint_path: &Path,
    config_path: &Path,
    seed: Option<u64>,
    samples: usize,
    grid: usize,
    inject_negative_weight: bool,
) -> CliResult {
    let (experiment, _) = load_config(config_path)?;
    let model = experiment.model()?;
    let mut params = read_checkpoint(checkpoint_path)?;
    let (_, v_hi) = model.support();
    if inject_negative_weight {
        params = corrupt_params(&params, v_hi);
    }
    let n = params.config().n;
    let seed = seed.unwrap_or(experiment.train.seed);
    let dataset = generate_dataset_stream(&model, n, samples, seed, 4)?;

    let mut max_regret: f64 = 0.0;
    let mut max_ir_violation: f64 = 0.0;
    for profile in dataset.profiles() {
        let out = hard_mechanism(&params, profile.values())?;
        if let Some(w) = out.winner {
            max_ir_violation = max_ir_violation.max(out.payment - profile.values()[w]);
        }
        for i in 0..n {
            max_regret = max_regret.max(empirical_regret(&params, profile, i, grid, v_hi)?);
        }
    }
    max_ir_violation = max_ir_violation.max(0.0);
    println!("max_regret={max_regret:e}");
    println!("max_ir_violation={max_ir_violation:e}");
    if max_regret > 1e-9 || max_ir_violation > 1e-9 {
        return Err(CliError {
            code: EXIT_VERIFY,
            message: format!(
                "verification failed: max_regret={max_regret:e} max_ir_violation={max_ir_violation:e}"
            ),
        });
    }
    println!("verified: truthful and individually rational on {samples} instances");
    Ok(())
}

/// Replaces bidder 0's transform with the decreasing map `b -> v_hi + 2 - b`.
/// Whenever the corrupted bidder wins, its payment exceeds its value, so the
/// checker must report an individual-rationality violation (and usually
/// positive regret as well).
fn corrupt_params(params: &NetParams, v_hi: f64) -> NetParams {
    let cfg = *params.config();
    let alpha = params.alpha().to_vec();
    let mut beta = params.beta().to_vec();
    for k in 0..cfg.k {
        for j in 0..cfg.j {
            beta[k * cfg.j + j] = v_hi + 2.0;
        }
    }
    let mut out = NetParams::new(cfg, alpha, beta).expect("shapes preserved");
    for k in 0..cfg.k {
        for j in 0..cfg.j {
            out.override_weight_for_tests(0, k, j, -1.0);
        }
    }
    out
}

fn cmd_baseline(
    config_path: &Path,
    seed: Option<u64>,
    samples: usize,
    out: Option<&Path>,
) -> CliResult {
    let (experiment, config_text) = load_config(config_path)?;
    let model = experiment.model()?;
    let n = experiment.net.n;
    let seed = seed.unwrap_or(experiment.train.seed);
    let estimate = spa_expected_revenue(&model, n, samples, seed)?;
    println!(
        "spa revenue (n={n}, {samples} samples): {:.4} ± {:.4}",
        estimate.mean, estimate.std_error
    );
    if let Some(path) = out {
        let body = format!(
            "n,samples,spa_revenue,std_error\n{n},{samples},{},{}\n",
            estimate.mean, estimate.std_error
        );
        write_with_header(path, &provenance(&config_text, seed), &body)?;
    }
    Ok(())
}
