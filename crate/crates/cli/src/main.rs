use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use unirep::experiment::{self, parse_config, TrainOptions};
use unirep::network::Preset;
use unirep::norm::Mode;
use unirep::{Error, Result};

/// Multi-domain training with domain-multiplexed normalization.
///
/// Exit codes: 0 success, 1 failed gradient check, 2 configuration error,
/// 3 divergence, 4 I/O or file format error. `UNIREP_THREADS` sets the
/// worker thread count.
#[derive(Parser)]
#[command(name = "unirep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Frozen,
    BnPlus,
}

#[derive(Subcommand)]
enum Command {
    /// Train a configuration; writes metrics, manifest and checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory, overriding `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Continue from a checkpoint of the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Validation error of a checkpoint.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "frozen")]
        mode: EvalMode,
    },
    /// Finite-difference check of every layer type and a whole network.
    Gradcheck {
        #[arg(long, default_value = "desk8")]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Table of final validation errors over metrics files.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn read_config(path: &Path) -> Result<(experiment::ExperimentConfig, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok((parse_config(&text)?, text))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { config, output, resume } => {
            let (cfg, text) = read_config(&config)?;
            let out = experiment::train(&cfg, &text, &TrainOptions { output_dir: output, resume })?;
            if let Some(last) = out.records.last() {
                println!("{}", serde_json::to_string(last).expect("record serializes"));
            }
            eprintln!("run written to {}", out.files.dir.display());
        }
        Command::Eval { config, checkpoint, mode } => {
            let (cfg, _) = read_config(&config)?;
            let mode = match mode {
                EvalMode::Frozen => Mode::Frozen,
                EvalMode::BnPlus => Mode::BnPlus,
            };
            let r = experiment::eval(&cfg, &checkpoint, mode)?;
            println!("{}", serde_json::to_string(&r).expect("result serializes"));
        }
        Command::Gradcheck { preset, seed } => {
            let reports = experiment::gradcheck(preset, seed)?;
            let mut ok = true;
            for r in &reports {
                println!("{r}");
                ok &= r.passed();
            }
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report { files } => print!("{}", experiment::report(&files)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("UNIREP_THREADS").ok().and_then(|v| v.parse().ok()) {
        unirep::par::init_threads(n);
    }
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
