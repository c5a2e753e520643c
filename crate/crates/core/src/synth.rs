//! Synthetic corpora for tests, examples and the desk-scale experiment.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::midi::{MidiPiece, NoteEvent, TempoMap, PITCH_MAX, PITCH_MIN};

/// Composer A writes diatonic lines in the middle register.
pub const COMPOSER_A: &str = "Alder, Anna";
/// Composer B writes chromatic clusters in the low register.
pub const COMPOSER_B: &str = "Birch, Bruno";

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

/// A piece by [`COMPOSER_A`]: stepwise C-major melody between C4 and C6
/// with occasional diatonic thirds.
pub fn diatonic_piece(rng: &mut impl Rng, duration: f64, source_id: &str) -> MidiPiece {
    let scale: Vec<u8> = (60..=84).filter(|p| MAJOR_SCALE.contains(&(p % 12))).collect();
    let mut idx = rng.gen_range(0..scale.len());
    let mut t = rng.gen_range(0.0..0.5);
    let mut notes = Vec::new();
    while t < duration - 0.2 {
        let len = *[0.25, 0.25, 0.5, 0.5, 0.75, 1.0].choose(rng).unwrap();
        let off = (t + len * rng.gen_range(0.8..1.0)).min(duration);
        let velocity = rng.gen_range(45..=90);
        notes.push(NoteEvent { pitch: scale[idx], onset: t, offset: off, velocity });
        if rng.gen_bool(0.25) && idx + 2 < scale.len() {
            notes.push(NoteEvent { pitch: scale[idx + 2], onset: t, offset: off, velocity });
        }
        let step: i64 = *[-2, -1, -1, 1, 1, 2].choose(rng).unwrap();
        idx = (idx as i64 + step).clamp(0, scale.len() as i64 - 1) as usize;
        t += len;
    }
    MidiPiece::new(notes, source_id, COMPOSER_A)
}

/// A piece by [`COMPOSER_B`]: clusters of 3 to 5 adjacent semitones rooted
/// between A0+7 and C3.
pub fn chromatic_piece(rng: &mut impl Rng, duration: f64, source_id: &str) -> MidiPiece {
    let mut t = rng.gen_range(0.0..0.5);
    let mut notes = Vec::new();
    while t < duration - 0.2 {
        let len = *[0.5, 0.75, 1.0, 1.5].choose(rng).unwrap();
        let off = (t + len * rng.gen_range(0.7..1.0)).min(duration);
        let root: u8 = rng.gen_range(28..=48);
        let width = rng.gen_range(3..=5);
        let velocity = rng.gen_range(60..=110);
        for p in root..root + width {
            notes.push(NoteEvent { pitch: p, onset: t, offset: off, velocity });
        }
        t += len;
    }
    MidiPiece::new(notes, source_id, COMPOSER_B)
}

/// `per_composer` pieces for each of the two composers, durations uniform in
/// `[min_duration, max_duration]` seconds, interleaved A, B, A, B, ...
pub fn two_composer_corpus(per_composer: usize, min_duration: f64, max_duration: f64, seed: u64) -> Vec<MidiPiece> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * per_composer);
    for i in 0..per_composer {
        let d = rng.gen_range(min_duration..=max_duration);
        out.push(diatonic_piece(&mut rng, d, &format!("alder-{i:04}")));
        let d = rng.gen_range(min_duration..=max_duration);
        out.push(chromatic_piece(&mut rng, d, &format!("birch-{i:04}")));
    }
    out
}

/// Notes on a tick grid together with the tempo map that times them.
#[derive(Clone, Debug)]
pub struct RandomScore {
    pub piece: MidiPiece,
    pub tempo: TempoMap,
}

/// Random notes with tick-exact times under a random tempo map with up to
/// `max_tempo_changes` changes. Notes of equal pitch never overlap, so
/// first-in first-out pairing recovers them unambiguously.
pub fn random_score(rng: &mut impl Rng, max_notes: usize, max_tempo_changes: usize) -> Result<RandomScore> {
    let tpq: u16 = *[96, 384, 480, 960].choose(rng).unwrap();
    let span: u64 = tpq as u64 * rng.gen_range(4..64);
    let changes: Vec<(u64, u32)> = (0..rng.gen_range(0..=max_tempo_changes))
        .map(|_| (rng.gen_range(0..span), rng.gen_range(250_000..1_500_000)))
        .collect();
    let tempo = TempoMap::new(tpq, changes)?;
    let mut notes: Vec<(u8, u64, u64)> = Vec::new();
    for _ in 0..rng.gen_range(0..=max_notes) {
        let pitch = rng.gen_range(PITCH_MIN..=PITCH_MAX);
        let on = rng.gen_range(0..span);
        let off = if rng.gen_bool(0.05) { on } else { on + rng.gen_range(1..tpq as u64 * 4) };
        let occupied = |a: u64, b: u64| (a, b.max(a + 1));
        let (lo, hi) = occupied(on, off);
        let clash = notes.iter().any(|&(p, a, b)| {
            let (a, b) = occupied(a, b);
            p == pitch && lo < b && a < hi
        });
        if !clash {
            notes.push((pitch, on, off));
        }
    }
    let events = notes
        .iter()
        .map(|&(pitch, on, off)| NoteEvent {
            pitch,
            onset: tempo.seconds(on),
            offset: tempo.seconds(off),
            velocity: rng.gen_range(1..=127),
        })
        .collect();
    Ok(RandomScore {
        piece: MidiPiece::new(events, "", ""),
        tempo,
    })
}

/// Writes `seconds` of a unit-amplitude sine as 16-bit mono PCM.
pub fn write_sine_wav(path: &Path, frequency: f64, seconds: f64, sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    let n = (seconds * sample_rate as f64).round() as usize;
    for i in 0..n {
        let x = (2.0 * std::f64::consts::PI * frequency * i as f64 / sample_rate as f64).sin();
        w.write_sample((x * i16::MAX as f64).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Unit sine samples in memory.
pub fn sine(frequency: f64, seconds: f64, sample_rate: u32) -> Vec<f32> {
    let n = (seconds * sample_rate as f64).round() as usize;
    (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * frequency * i as f64 / sample_rate as f64).sin() as f32)
        .collect()
}

/// Catalog-style file name "<Surname>, <First names>, <Title>.mid".
pub fn corpus_file_name(piece: &MidiPiece) -> String {
    format!("{}, {}.mid", piece.composer, piece.source_id)
}

/// Writes every piece as an SMF under `dir` named by [`corpus_file_name`],
/// at 120 bpm and 480 ticks per quarter.
pub fn write_corpus(dir: &Path, pieces: &[MidiPiece]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tempo = TempoMap::constant(480, crate::midi::DEFAULT_TEMPO)?;
    for piece in pieces {
        let bytes = crate::midi::write_smf(piece, &tempo, crate::midi::SmfTrackLayout::Format0, 0);
        let path = dir.join(corpus_file_name(piece));
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
