//! Trains CNN and CRNN on a generated two-composer corpus and prints test
//! accuracy. Usage: cargo run --release --example train_desk_scale [pieces] [seed]

use std::time::Instant;

use composer_id::nn::Architecture;
use composer_id::pipeline::{in_memory_experiment, ExperimentConfig};
use composer_id::synth::two_composer_corpus;

fn main() -> composer_id::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let pieces: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let seed: u64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(7);
    let corpus = two_composer_corpus(pieces / 2, 20.0, 60.0, seed);

    for arch in [Architecture::Cnn, Architecture::Crnn] {
        let config = ExperimentConfig {
            seed,
            k: 2,
            arch,
            fps: 25,
            width_divisor: 8,
            max_epochs: 30,
            ..ExperimentConfig::default()
        };
        let started = Instant::now();
        let run = in_memory_experiment(&corpus, &config)?;
        print!("{}", run.outcome.log.to_tsv());
        println!(
            "{arch}: best epoch {}, test clip macro {:.3}, piece macro {:.3}, {:.0?}",
            run.outcome.log.best_epoch,
            run.clip_report.macro_accuracy,
            run.piece_report.macro_accuracy,
            started.elapsed()
        );
    }
    Ok(())
}
