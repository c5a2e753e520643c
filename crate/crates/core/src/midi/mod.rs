//! Standard MIDI File ingest: absolute-time note lists with a resolved tempo map.

mod parse;
mod tempo;
mod write;

pub use parse::{parse_midi, parse_midi_with, read_varlen, ParseOptions};
pub use tempo::{ticks_to_seconds, TempoMap, DEFAULT_TEMPO};
pub use write::{write_smf, write_varlen, SmfTrackLayout};

/// Lowest and highest piano keys kept at ingest.
pub const PITCH_MIN: u8 = 21;
pub const PITCH_MAX: u8 = 108;

#[derive(Clone, Debug, PartialEq)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: f64,
    /// Seconds; equal to `onset` only for zero-length notes in the source file.
    pub offset: f64,
    pub velocity: u8,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MidiPiece {
    pub notes: Vec<NoteEvent>,
    pub duration: f64,
    pub source_id: String,
    pub composer: String,
}

impl MidiPiece {
    /// Sorts notes by (onset, pitch), stable, and recomputes the duration.
    pub fn new(mut notes: Vec<NoteEvent>, source_id: impl Into<String>, composer: impl Into<String>) -> Self {
        notes.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
        let duration = notes.iter().map(|n| n.offset).fold(0.0, f64::max);
        MidiPiece {
            notes,
            duration,
            source_id: source_id.into(),
            composer: composer.into(),
        }
    }
}
