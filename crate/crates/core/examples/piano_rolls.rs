//! Rasterizes the first clip of a generated piece and draws the frame roll
//! as text, one line per pitch that sounds.
//! Usage: cargo run --example piano_rolls [fps]

use composer_id::features::{extract_rolls, stack_channels, InputVariant};
use composer_id::synth::diatonic_piece;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> composer_id::Result<()> {
    let fps: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let piece = diatonic_piece(&mut rng, 8.0, "demo");
    let rolls = extract_rolls(&piece, 0.0, 8.0, fps);
    println!("{} frames x 88 pitches at {fps} fps", rolls.frames());
    for col in (0..88).rev() {
        let line: String = (0..rolls.frames())
            .map(|t| match (rolls.onset.get(t, col), rolls.frame.get(t, col)) {
                (o, _) if o > 0.0 => 'o',
                (_, f) if f > 0.0 => '-',
                _ => ' ',
            })
            .collect();
        if line.trim().is_empty() {
            continue;
        }
        println!("{:>3} |{line}", col + 21);
    }
    let stack = stack_channels(&rolls, InputVariant::FrameOnsetVelocity)?;
    println!("network input: {}x{}x{}", stack.channels, stack.rows, stack.cols);
    Ok(())
}
