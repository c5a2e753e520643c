//! The file-based pipeline end to end on a small generated corpus:
//! ingest, split, extract, train, eval, then predict one piece.
//! Usage: cargo run --release --example run_pipeline [work_dir]

use std::path::PathBuf;

use composer_id::eval::render_report;
use composer_id::pipeline::{self, ExperimentConfig};
use composer_id::synth::{corpus_file_name, two_composer_corpus, write_corpus};

fn main() -> composer_id::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "pipeline_demo".into()));
    let corpus = two_composer_corpus(10, 20.0, 50.0, 4);
    write_corpus(&root.join("midi"), &corpus)?;
    let config = ExperimentConfig::parse(&format!(
        "midi_dir = {}\nout_dir = {}\nk = 2\nfps = 25\nwidth_divisor = 8\nmax_epochs = 5\n",
        root.join("midi").display(),
        root.join("out").display()
    ))?;
    let (clip, piece) = pipeline::run_experiment(&config)?;
    print!("{}{}", render_report(&clip)?, render_report(&piece)?);
    let probe = root.join("midi").join(corpus_file_name(&corpus[1]));
    let p = pipeline::predict(&config, &probe)?;
    println!("{} -> {} {:?}", probe.display(), p.composer, p.piece_probabilities);
    Ok(())
}
