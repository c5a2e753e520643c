//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use composer_id::dataset::{Catalog, CatalogEntry, SplitAssignment, Subset};
use composer_id::features::{extract_rolls, RollSet, PITCH_COUNT};
use composer_id::midi::{MidiPiece, NoteEvent};
use rand::Rng;

/// Note with integer-millisecond times, so frame arithmetic can be exact.
#[derive(Clone, Copy, Debug)]
pub struct GridNote {
    pub pitch: u8,
    pub on_ms: i64,
    pub off_ms: i64,
    pub velocity: u8,
}

/// Random notes over `[0, length_ms)`. Same-pitch notes never overlap and
/// their onsets are at least `min_gap_ms` apart.
pub fn random_grid_notes(rng: &mut impl Rng, length_ms: i64, max_notes: usize, min_gap_ms: i64) -> Vec<GridNote> {
    let mut notes: Vec<GridNote> = Vec::new();
    for _ in 0..rng.gen_range(0..=max_notes) {
        let pitch = rng.gen_range(21..=108);
        let on_ms = rng.gen_range(0..length_ms);
        let off_ms = match rng.gen_range(0..10) {
            0 => on_ms,
            1 => on_ms + rng.gen_range(1..15),
            _ => on_ms + rng.gen_range(1..4000),
        };
        let clash = notes.iter().any(|n| {
            n.pitch == pitch && (n.on_ms - on_ms).abs() < min_gap_ms.max(1)
                || n.pitch == pitch && on_ms < n.off_ms.max(n.on_ms + 1) && n.on_ms < off_ms.max(on_ms + 1)
        });
        if !clash {
            notes.push(GridNote { pitch, on_ms, off_ms, velocity: rng.gen_range(1..=127) });
        }
    }
    notes
}

pub fn to_piece(notes: &[GridNote]) -> MidiPiece {
    let events = notes
        .iter()
        .map(|n| NoteEvent {
            pitch: n.pitch,
            onset: n.on_ms as f64 / 1000.0,
            offset: n.off_ms as f64 / 1000.0,
            velocity: n.velocity,
        })
        .collect();
    MidiPiece::new(events, "grid", "oracle")
}

pub struct OracleRolls {
    pub frame: Vec<[u8; PITCH_COUNT]>,
    pub onset: Vec<[u8; PITCH_COUNT]>,
    pub velocity: Vec<[f64; PITCH_COUNT]>,
    pub onsets_in_window: usize,
}

/// Per-frame brute force in integer arithmetic. Frame t spans
/// `[start + t/fps, start + (t+1)/fps)`. A note is active in frame t when
/// it begins inside that frame, or when it began earlier and is still
/// sounding at the frame's end.
pub fn roll_oracle(notes: &[GridNote], start_ms: i64, duration_ms: i64, fps: i64) -> OracleRolls {
    let t_len = ((duration_ms * fps) as f64 / 1000.0).round() as i64;
    let mut out = OracleRolls {
        frame: vec![[0; PITCH_COUNT]; t_len as usize],
        onset: vec![[0; PITCH_COUNT]; t_len as usize],
        velocity: vec![[0.0; PITCH_COUNT]; t_len as usize],
        onsets_in_window: 0,
    };
    for t in 0..t_len {
        // frame bounds in units of 1/(1000·fps) seconds
        let lo = start_ms * fps + t * 1000;
        let hi = lo + 1000;
        for n in notes {
            let on = n.on_ms * fps;
            let off = n.off_ms * fps;
            let starts_here = lo <= on && on < hi;
            let sounding_at_end = on < hi && hi <= off;
            if starts_here || sounding_at_end {
                let c = (n.pitch - 21) as usize;
                out.frame[t as usize][c] = 1;
                let v = n.velocity as f64 / 127.0;
                if v > out.velocity[t as usize][c] {
                    out.velocity[t as usize][c] = v;
                }
                if starts_here {
                    out.onset[t as usize][c] = 1;
                }
            }
        }
    }
    let window_end = start_ms * fps + t_len * 1000;
    out.onsets_in_window = notes
        .iter()
        .filter(|n| start_ms * fps <= n.on_ms * fps && n.on_ms * fps < window_end)
        .count();
    out
}

/// Compares `extract_rolls` against [`roll_oracle`]; returns a description
/// of the first mismatch.
pub fn compare_rolls(notes: &[GridNote], start_ms: i64, duration_ms: i64, fps: i64) -> Result<(), String> {
    let piece = to_piece(notes);
    let rolls: RollSet = extract_rolls(&piece, start_ms as f64 / 1000.0, duration_ms as f64 / 1000.0, fps as f64);
    let oracle = roll_oracle(notes, start_ms, duration_ms, fps);
    if rolls.frames() != oracle.frame.len() {
        return Err(format!("T = {} vs oracle {}", rolls.frames(), oracle.frame.len()));
    }
    for t in 0..oracle.frame.len() {
        for c in 0..PITCH_COUNT {
            let (f, o, v) = (rolls.frame.get(t, c), rolls.onset.get(t, c), rolls.velocity.get(t, c));
            if f != oracle.frame[t][c] as f32 || o != oracle.onset[t][c] as f32 {
                return Err(format!(
                    "frame {t} pitch {}: got frame {f} onset {o}, oracle {} {} (start {start_ms} ms, fps {fps})",
                    c + 21,
                    oracle.frame[t][c],
                    oracle.onset[t][c]
                ));
            }
            if (v as f64 - oracle.velocity[t][c]).abs() > 1e-7 {
                return Err(format!("frame {t} pitch {}: velocity {v} vs {}", c + 21, oracle.velocity[t][c]));
            }
        }
    }
    let onset_total: f32 = rolls.onset.data.iter().sum();
    if onset_total as usize != oracle.onsets_in_window {
        return Err(format!("onset sum {onset_total} vs {} in-window notes", oracle.onsets_in_window));
    }
    Ok(())
}

/// Naive O(N²) one-sided DFT magnitudes of `frame`.
pub fn dft_magnitudes(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &x) in frame.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Catalog with `counts[i]` pieces for composer `i`, named "Composer {i:03}".
pub fn synthetic_catalog(counts: &[usize]) -> Catalog {
    let mut pieces = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            pieces.push(CatalogEntry {
                source_id: format!("c{c:03}-p{i:03}"),
                composer: format!("Composer {c:03}"),
                duration: 30.0 + i as f64,
            });
        }
    }
    Catalog::new(pieces).expect("unique ids")
}

/// Independent check of a split. Returns (composers missing a subset,
/// composers whose train share is outside [0.7, 0.9], ids not assigned
/// exactly once).
pub fn stratification_violations(catalog: &Catalog, split: &SplitAssignment) -> (Vec<String>, Vec<(String, f64)>, Vec<String>) {
    let mut missing = Vec::new();
    let mut fractions = Vec::new();
    let mut unassigned = Vec::new();
    let assigned: std::collections::HashMap<&str, usize> =
        split.entries().iter().fold(Default::default(), |mut m, (id, _)| {
            *m.entry(id.as_str()).or_default() += 1;
            m
        });
    for p in catalog.pieces() {
        if assigned.get(p.source_id.as_str()) != Some(&1) {
            unassigned.push(p.source_id.clone());
        }
    }
    if split.entries().len() != catalog.pieces().len() {
        unassigned.push(format!("{} entries for {} pieces", split.entries().len(), catalog.pieces().len()));
    }
    for composer in catalog.composers() {
        let subsets: Vec<Subset> = catalog
            .pieces()
            .iter()
            .filter(|p| &p.composer == composer)
            .filter_map(|p| split.get(&p.source_id))
            .collect();
        if [Subset::Train, Subset::Validation, Subset::Test].iter().any(|s| !subsets.contains(s)) {
            missing.push(composer.clone());
        }
        let train = subsets.iter().filter(|&&s| s == Subset::Train).count() as f64 / subsets.len() as f64;
        if !(0.7..=0.9).contains(&train) {
            fractions.push((composer.clone(), train));
        }
    }
    (missing, fractions, unassigned)
}
