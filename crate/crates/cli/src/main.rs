//! `ntae` command line: runs the experiment protocols and writes JSON and CSV results.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ntae::error::{Error, Result};
use ntae::experiments::{self as exp, load_config, parse_config, Report};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "ntae", version, about = "Mode-aware non-linear Tucker autoencoders")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for results and artifacts.
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    /// Worker threads for independent runs (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Noisy Tucker benchmark: every model at every order and size.
    SynthBenchmark,
    /// Benchmark with a share of samples mode-permuted.
    PermutationStudy,
    /// Closed-form parameter and FLOP counts (no training).
    ParamSweep,
    /// Train at several reduction factors and write reconstructions.
    Compress {
        /// NTT1 tensor file; overrides `input` in the config.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Cluster learned latents against an all-features baseline.
    Cluster {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Label sidecar, one integer per line.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Train one model and save a checkpoint.
    Train {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score a checkpoint on a tensor file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Clean tensor to score against; defaults to the input.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

fn config<T: serde::de::DeserializeOwned>(path: Option<&Path>, name: &str) -> Result<T> {
    match path {
        Some(p) => load_config(p),
        None => Err(Error::Config(format!("{name} needs --config <FILE>"))),
    }
}

fn run(cli: Cli) -> Result<Report> {
    let c = &cli.common;
    let cfg_path = c.config.as_deref();
    let out = Some(c.out_dir.as_path());
    match cli.command {
        Command::SynthBenchmark => {
            let mut cfg: exp::SynthBenchmarkConfig = config(cfg_path, "synth-benchmark")?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            cfg.threads = c.threads.unwrap_or(cfg.threads);
            exp::synth_benchmark(&cfg)
        }
        Command::PermutationStudy => {
            let mut cfg: exp::PermutationStudyConfig = config(cfg_path, "permutation-study")?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            cfg.threads = c.threads.unwrap_or(cfg.threads);
            exp::permutation_study(&cfg)
        }
        Command::ParamSweep => {
            let cfg: exp::ParamSweepConfig = match cfg_path {
                Some(p) => load_config(p)?,
                None => parse_config("")?,
            };
            exp::param_sweep(&cfg)
        }
        Command::Compress { input } => {
            let mut cfg: exp::CompressConfig = config(cfg_path, "compress")?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            cfg.threads = c.threads.unwrap_or(cfg.threads);
            if input.is_some() {
                cfg.input = input;
                cfg.synthetic = None;
            }
            exp::compress(&cfg, out)
        }
        Command::Cluster { input, labels } => {
            let mut cfg: exp::ClusterConfig = config(cfg_path, "cluster")?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            cfg.threads = c.threads.unwrap_or(cfg.threads);
            if input.is_some() {
                cfg.input = input;
                cfg.synthetic = None;
                cfg.blobs = None;
            }
            if labels.is_some() {
                cfg.labels = labels;
            }
            exp::cluster(&cfg)
        }
        Command::Train { input } => {
            let mut cfg: exp::TrainCommandConfig = config(cfg_path, "train")?;
            cfg.seed = c.seed.unwrap_or(cfg.seed);
            if input.is_some() {
                cfg.input = input;
                cfg.synthetic = None;
            }
            exp::train_single(&cfg, out)
        }
        Command::Eval {
            checkpoint,
            input,
            reference,
        } => exp::eval(&checkpoint, &input, reference.as_deref(), out),
    }
}

/// Prints the one-line JSON error record. Usage errors exit with 2, all others with 1.
fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "status": "error", "kind": kind, "message": message }));
    ExitCode::from(if kind == "usage" { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return fail("usage", first);
        }
    };
    let out_dir = cli.common.out_dir.clone();
    let report = match run(cli) {
        Ok(r) => r,
        Err(e) => return fail(e.kind(), &e.to_string()),
    };
    match report.write(&out_dir) {
        Ok(written) => {
            let mut files: Vec<_> = written.iter().map(|p| p.display().to_string()).collect();
            files.extend(report.artifacts.iter().map(|p| p.display().to_string()));
            println!(
                "{}",
                json!({ "status": "ok", "command": report.command, "runs": report.records.len(), "files": files })
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
