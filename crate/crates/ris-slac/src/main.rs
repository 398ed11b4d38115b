use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ris_slac::config::{parse_config, ConfigError, RunConfig};
use ris_slac::experiments::{run_ce_benchmark, run_tradeoff_sweep, CeBenchmark, TradeoffPoint};
use ris_slac::Error;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "ris-slac", version, about = "RIS channel estimation and localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel-estimation NMSE and effective spectral efficiency versus SNR.
    Cebench {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for cebench.csv and run.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Position error bound and effective spectral efficiency versus pilot budget.
    Tradeoff {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Config(ConfigError),
    Lib(Error),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Lib(Error::Io(_)) | Failure::Io(_) => 3,
            Failure::Lib(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn io<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    Ok(parse_config(&text)?)
}

fn conventions() -> serde_json::Value {
    json!({
        "direction": "unit vector from an array toward the far end",
        "channel": "sum of g * a_rx * a_tx^T, steering vectors unconjugated",
        "noise": "per receive antenna before combining, unit-gain paths",
        "snr_db": "per-antenna transmit SNR",
        "nmse": "mean squared Frobenius error over mean squared truth norm",
        "eff_se_bits": "(1 - t_p/t_c) * log2(1 + snr_eff)",
        "peb_m": "sqrt of the mean over trials of the position CRB trace",
    })
}

fn write_json(dir: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(io(&path))
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(io(path))?;
    w.write_record(header).map_err(io(path))?;
    for r in rows {
        w.write_record(&r).map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

fn cebench(config: &Path, out: &Path, seed: Option<u64>, trials: Option<usize>) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.frame.seed = s;
    }
    if let Some(t) = trials {
        cfg.frame.trials = t;
    }
    let bench_cfg = cfg.ce_benchmark()?;
    let CeBenchmark { rows, training } = run_ce_benchmark(&bench_cfg)?;
    std::fs::create_dir_all(out).map_err(io(out))?;
    write_csv(
        &out.join("cebench.csv"),
        &["estimator", "t_p", "snr_db", "nmse", "eff_se_bits"],
        rows.iter().map(|r| {
            vec![
                r.estimator.name().to_string(),
                r.t_p.to_string(),
                r.snr_db.to_string(),
                r.nmse.to_string(),
                r.eff_se.to_string(),
            ]
        }),
    )?;
    let training: Vec<_> = training
        .iter()
        .map(|t| {
            json!({
                "t_p": t.t_p,
                "snr_db": t.snr_db,
                "train_losses": t.train_losses,
                "validation_nmse_initial": t.validation_nmse_initial,
                "validation_nmse_trained": t.validation_nmse_trained,
                "alphas": t.estimator.alphas(),
                "lambdas": t.estimator.lambdas(),
            })
        })
        .collect();
    write_json(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "cebench",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.frame.seed,
            "config": cfg,
            "conventions": conventions(),
            "rows": rows.len(),
            "training": training,
        }),
    )
}

fn tradeoff(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.frame.seed = s;
    }
    let sweep_cfg = cfg.tradeoff()?;
    let points: Vec<TradeoffPoint> = run_tradeoff_sweep(&sweep_cfg)?;
    std::fs::create_dir_all(out).map_err(io(out))?;
    write_csv(
        &out.join("tradeoff.csv"),
        &["ris_elems", "policy", "t_p", "peb_m", "eff_se_bits"],
        points.iter().map(|p| {
            vec![
                p.ris_elements.to_string(),
                p.policy.name().to_string(),
                p.t_p.to_string(),
                p.peb.to_string(),
                p.eff_se.to_string(),
            ]
        }),
    )?;
    write_json(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "tradeoff",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.frame.seed,
            "config": cfg,
            "conventions": conventions(),
            "rows": points.len(),
        }),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cebench { config, out, seed, trials } => cebench(&config, &out, seed, trials),
        Command::Tradeoff { config, out, seed } => tradeoff(&config, &out, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
