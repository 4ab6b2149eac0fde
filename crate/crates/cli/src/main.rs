use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dwic_core::pipeline::{run_all, run_stage, PipelineConfig, Stage};
use dwic_core::Error;

/// Two-stage DWI prostate cancer classifier: CNN ensemble on slices, random
/// forest on per-patient probability statistics.
#[derive(Debug, Parser)]
#[command(name = "dwic", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, short = 'c', global = true)]
    config: Option<PathBuf>,

    /// Override one config key; repeatable. Applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Work directory; beats `DWIC_WORKDIR` and the config's `work_dir`.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,

    /// Ensemble members trained concurrently by `train` and `run-all`.
    #[arg(long, global = true)]
    parallel_members: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate synthetic patients into raw/.
    Synth,
    /// Resize and crop raw volumes into preprocessed/.
    Preprocess,
    /// Stratified patient split and normalization statistics.
    Split,
    /// Train the CNN ensemble.
    Train,
    /// Score every slice with every member.
    Infer,
    /// Per-patient probability-set statistics.
    Features,
    /// Importance-ranked feature selection.
    Select,
    /// Train the patient-level random forest.
    TrainRf,
    /// ROC, AUC, bootstrap intervals and threshold metrics on the test split.
    Evaluate,
    /// SVG ROC plots.
    Plot,
    /// Every stage in order.
    RunAll,
    /// Print the resolved configuration and its hash.
    ShowConfig,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Synth => Stage::Synth,
            Command::Preprocess => Stage::Preprocess,
            Command::Split => Stage::Split,
            Command::Train => Stage::Train,
            Command::Infer => Stage::Infer,
            Command::Features => Stage::Features,
            Command::Select => Stage::Select,
            Command::TrainRf => Stage::TrainRf,
            Command::Evaluate => Stage::Evaluate,
            Command::Plot => Stage::Plot,
            Command::RunAll | Command::ShowConfig => return None,
        })
    }
}

fn resolve_config(cli: &Cli) -> dwic_core::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = std::env::var_os("DWIC_WORKDIR").filter(|v| !v.is_empty()) {
        cfg.work_dir = dir.into();
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    if let Some(dir) = &cli.work_dir {
        cfg.work_dir = dir.clone();
    }
    if let Some(n) = cli.parallel_members {
        cfg.parallel_members = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Member { source, .. } => exit_code(source),
        Error::Config(_) => 3,
        Error::MissingArtifact(_) => 4,
        Error::Format { .. } | Error::InvalidLabels(_) | Error::Empty(_) => 5,
        Error::NonFinite(_) => 6,
        Error::Io { .. } => 7,
        Error::Shape(_) | Error::InvalidArgument(_) | Error::MissingCache(_) => 1,
    }
}

fn run(cli: &Cli) -> dwic_core::Result<()> {
    let cfg = resolve_config(cli)?;
    match cli.command.stage() {
        Some(stage) => run_stage(stage, &cfg),
        None if matches!(cli.command, Command::RunAll) => run_all(&cfg),
        None => {
            print!("# config_hash={}\n{}", cfg.hash(), cfg.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
