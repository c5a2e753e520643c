//! Parses a MIDI file and prints its notes.
//! Usage: cargo run --example parse_midi -- <file.mid> [--pedal]

use composer_id::midi::{parse_midi_with, ParseOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(path) = args.iter().find(|a| !a.starts_with("--")) else {
        eprintln!("usage: parse_midi <file.mid> [--pedal]");
        std::process::exit(2);
    };
    let options = ParseOptions {
        sustain_pedal: args.iter().any(|a| a == "--pedal"),
    };
    let bytes = std::fs::read(path)?;
    let piece = parse_midi_with(&bytes, options)?;
    println!("{} notes, {:.3} s", piece.notes.len(), piece.duration);
    println!("pitch\tonset\toffset\tvelocity");
    for n in piece.notes.iter().take(40) {
        println!("{}\t{:.4}\t{:.4}\t{}", n.pitch, n.onset, n.offset, n.velocity);
    }
    if piece.notes.len() > 40 {
        println!("... {} more", piece.notes.len() - 40);
    }
    Ok(())
}
