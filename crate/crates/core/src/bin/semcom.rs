use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semcom::allocation::Strategy;
use semcom::pipeline::{self, resolve_seed, RunConfig, SEED_ENV};

#[derive(Parser)]
#[command(name = "semcom", version, about = "Robustness masks and mask-guided subchannel allocation for task-oriented semantic communication")]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides SEMCOM_SEED and the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory holding every stage's artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// 512 units on 256 data subchannels of capacity 2.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or import) the dataset and write the train/test split.
    GenData,
    /// Train and freeze the transceiver.
    Train,
    /// Compute the robustness mask of the trained model.
    Mask,
    /// Assign feature units to subchannels.
    Allocate {
        /// CSI file with header `subchannel_index,snr_db`; sampled when omitted.
        #[arg(long)]
        csi: Option<PathBuf>,
        #[arg(long, default_value = "proposed", value_parser = parse_strategy)]
        strategy: Strategy,
    },
    /// Accuracy against mean SNR for each allocation strategy.
    Sweep,
    /// Decode from the robust and non-robust halves under ideal and noisy channels.
    Halfsplit,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| "expected proposed, random, worst_case or brute_force".to_string())
}

fn run(cli: Cli) -> semcom::Result<Vec<PathBuf>> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(cli.seed, env.as_deref(), cfg.seed)?;
    cfg = cfg.with_seed(seed);
    if cli.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(out) = cli.out {
        cfg = cfg.with_out_dir(out);
    }
    let out = match cli.command {
        Command::GenData => pipeline::gen_data(&cfg)?,
        Command::Train => pipeline::train_stage(&cfg)?,
        Command::Mask => pipeline::mask_stage(&cfg)?,
        Command::Allocate { csi, strategy } => pipeline::allocate_stage(&cfg, csi.as_deref(), strategy)?,
        Command::Sweep => pipeline::sweep_stage(&cfg)?,
        Command::Halfsplit => pipeline::halfsplit_stage(&cfg)?,
    };
    let mut files = out.files;
    files.push(out.sidecar);
    Ok(files)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
