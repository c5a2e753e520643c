//! Clip-wise versus piece-wise evaluation on hand-made clip probabilities,
//! including a tie.
//! Usage: cargo run --example piece_aggregation

use composer_id::eval::{aggregate_pieces, clip_report, piece_report, render_report};

fn main() -> composer_id::Result<()> {
    let composers = vec!["Bach, Johann Sebastian".to_string(), "Chopin, Frédéric".to_string()];
    let probs = vec![
        vec![0.7, 0.3],
        vec![0.4, 0.6],
        vec![0.6, 0.4],
        vec![0.2, 0.8],
        vec![0.5, 0.5],
        vec![0.25, 0.75],
        vec![0.75, 0.25],
    ];
    let labels = [0, 0, 0, 1, 1, 1, 1];
    let ids = ["bwv846", "bwv846", "bwv846", "op28-4", "op28-4", "op10-3", "op10-3"];
    for (id, label, mean) in aggregate_pieces(&probs, &labels, &ids)? {
        println!("{id}: true {label}, mean {mean:?}");
    }
    print!("{}", render_report(&clip_report(&probs, &labels, &ids, &composers)?)?);
    print!("{}", render_report(&piece_report(&probs, &labels, &ids, &composers)?)?);
    Ok(())
}
