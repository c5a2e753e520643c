//! Writes a generated two-composer MIDI corpus to a directory.
//! Usage: cargo run --example write_corpus -- <dir> [pieces] [seed]

use std::path::PathBuf;

use composer_id::synth::{two_composer_corpus, write_corpus};

fn main() -> composer_id::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let pieces: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let corpus = two_composer_corpus(pieces / 2, 20.0, 60.0, seed);
    write_corpus(&dir, &corpus)?;
    println!("{} files in {}", corpus.len(), dir.display());
    Ok(())
}
