use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use composer_id::eval::render_report;
use composer_id::midi::ParseOptions;
use composer_id::pipeline::{self, Artifacts, ExperimentConfig};

#[derive(Parser)]
#[command(name = "cid", about = "Composer identification from piano MIDI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    arch: Option<String>,
    #[arg(long, global = true)]
    variant: Option<String>,
    #[arg(long, global = true)]
    fps: Option<u32>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any other config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Catalog the MIDI directory into manifest.tsv.
    Ingest,
    /// Write the feature cache for the top-k composers.
    Extract,
    /// Write composers.txt and split.tsv.
    Split,
    /// Train and write model.cckp and train_log.tsv.
    Train,
    /// Evaluate the checkpoint on the test subset.
    Eval,
    /// Predict the composer of one MIDI file.
    Predict { midi: PathBuf },
    /// ingest, split, extract, train and eval in one go.
    RunExperiment,
}

fn load_config(cli: &Cli) -> composer_id::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for kv in &cli.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| composer_id::Error::Config(format!("expected KEY=VALUE, got {kv:?}")))?;
        config.set(key.trim(), value.trim())?;
    }
    let flags = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("k", cli.k.map(|v| v.to_string())),
        ("arch", cli.arch.clone()),
        ("variant", cli.variant.clone()),
        ("fps", cli.fps.map(|v| v.to_string())),
        ("out_dir", cli.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(value) = value {
            config.set(key, &value)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> composer_id::Result<()> {
    let config = load_config(cli)?;
    let art = Artifacts::new(&config.out_dir);
    match &cli.command {
        Command::Ingest => {
            let options = ParseOptions {
                sustain_pedal: config.sustain_pedal,
            };
            let summary = pipeline::ingest(&config.midi_dir, &art.manifest(), options)?;
            if let Some(w) = summary.warning() {
                eprintln!("warning: {w}");
            }
            println!("{} pieces -> {}", summary.pieces, art.manifest().display());
        }
        Command::Extract => {
            let n = pipeline::extract(&config)?;
            println!("{n} clips -> {}", art.features().display());
        }
        Command::Split => {
            let catalog = pipeline::split(&config)?;
            println!("{} pieces of {} composers -> {}", catalog.pieces().len(), catalog.composers().len(), art.split().display());
        }
        Command::Train => {
            let log = pipeline::train(&config)?;
            print!("{}", log.to_tsv());
            println!("best epoch {} -> {}", log.best_epoch, art.checkpoint().display());
        }
        Command::Eval => {
            let (clip, piece) = pipeline::eval(&config)?;
            print!("{}{}", render_report(&clip)?, render_report(&piece)?);
        }
        Command::Predict { midi } => {
            let p = pipeline::predict(&config, midi)?;
            let probs: Vec<String> = p.piece_probabilities.iter().map(|v| format!("{v:.4}")).collect();
            println!("{}\t{}", p.composer, probs.join("\t"));
        }
        Command::RunExperiment => {
            let (clip, piece) = pipeline::run_experiment(&config)?;
            println!(
                "clip macro {:.4}, piece macro {:.4}; reports in {}",
                clip.macro_accuracy,
                piece.macro_accuracy,
                config.out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
