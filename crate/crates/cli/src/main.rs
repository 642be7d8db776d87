//! `psim`: simulate, reconstruct, train, infer and evaluate low-coherence
//! phase-shifting interferometry data.

mod error;
mod eval;
mod infer;
mod layout;
mod manifest;
mod reconstruct;
mod simulate;
mod train;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psim_gan::Mode;
use serde::de::DeserializeOwned;

use error::{io_err, CliError, CliResult};

#[derive(Parser)]
#[command(name = "psim", version, about = "Phase-shifting interferometry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize interferogram stacks with ground-truth phase.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Five-step phase, unwrapping, quality and height maps.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train a GAN, or resume one from --checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Predict frames or phase maps from each sample's first frame.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Compare predictions with ground truth; writes metrics.json and profile CSVs.
    Eval {
        /// Directory of predictions (infer or reconstruct output).
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth dataset; defaults to the prediction directory itself.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = eval::MaskMode::None)]
        mask: eval::MaskMode,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

pub(crate) fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub(crate) fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("workers: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            workers,
        } => simulate::run(&config, &out, seed, workers),
        Command::Reconstruct { data, out, workers } => reconstruct::run(&data, &out, workers),
        Command::Train {
            config,
            data,
            out,
            seed,
            mode,
            steps,
            checkpoint,
        } => train::run(train::TrainArgs {
            config: config.as_deref(),
            data: &data,
            out: &out,
            seed,
            mode,
            steps,
            checkpoint: checkpoint.as_deref(),
        }),
        Command::Infer {
            checkpoint,
            data,
            out,
            mode,
            workers,
        } => infer::run(&checkpoint, &data, &out, mode, workers),
        Command::Eval {
            pred,
            data,
            out,
            mask,
            workers,
        } => eval::run(&pred, data.as_deref(), &out, mask, workers),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PSIM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("psim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
