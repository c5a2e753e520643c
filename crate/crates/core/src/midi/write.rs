//! Minimal SMF writer used to synthesize fixtures and test corpora.

use super::tempo::TempoMap;
use super::MidiPiece;

/// Encodes a variable-length quantity (values up to 2^28 − 1).
pub fn write_varlen(mut value: u32, out: &mut Vec<u8>) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7F) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(buf[i] | if i > 0 { 0x80 } else { 0 });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmfTrackLayout {
    /// One track holding tempo and notes.
    Format0,
    /// A tempo track followed by `note_tracks` tracks; notes are dealt
    /// round-robin in (onset, pitch) order, track i on channel i % 16.
    Format1 { note_tracks: usize },
}

struct Ev {
    tick: u64,
    order: u8,
    bytes: Vec<u8>,
}

fn encode_track(mut events: Vec<Ev>, end_tick: u64) -> Vec<u8> {
    events.sort_by_key(|e| (e.tick, e.order));
    let mut body = Vec::new();
    let mut last = 0u64;
    let mut running: Option<u8> = None;
    for e in &events {
        write_varlen((e.tick - last) as u32, &mut body);
        last = e.tick;
        let status = e.bytes[0];
        if status < 0xF0 && running == Some(status) {
            body.extend_from_slice(&e.bytes[1..]);
        } else {
            body.extend_from_slice(&e.bytes);
            running = (status < 0xF0).then_some(status);
        }
    }
    write_varlen(end_tick.saturating_sub(last) as u32, &mut body);
    body.extend_from_slice(&[0xFF, 0x2F, 0x00]);
    let mut chunk = b"MTrk".to_vec();
    chunk.extend((body.len() as u32).to_be_bytes());
    chunk.extend(body);
    chunk
}

/// Writes `piece` as a Standard MIDI File, converting seconds to the nearest
/// tick of `map`. Every `velocity_zero_every`-th note (1-based) ends with a
/// velocity-0 note-on instead of a note-off; 0 disables that.
pub fn write_smf(piece: &MidiPiece, map: &TempoMap, layout: SmfTrackLayout, velocity_zero_every: usize) -> Vec<u8> {
    let tempo_events: Vec<Ev> = map
        .entries()
        .iter()
        .map(|&(tick, tempo)| Ev {
            tick,
            order: 0,
            bytes: vec![0xFF, 0x51, 0x03, (tempo >> 16) as u8, (tempo >> 8) as u8, tempo as u8],
        })
        .collect();
    let n_note_tracks = match layout {
        SmfTrackLayout::Format0 => 1,
        SmfTrackLayout::Format1 { note_tracks } => note_tracks.max(1),
    };
    let mut note_events: Vec<Vec<Ev>> = (0..n_note_tracks).map(|_| Vec::new()).collect();
    let mut end_tick = 0;
    for (i, note) in piece.notes.iter().enumerate() {
        let track = i % n_note_tracks;
        let channel = match layout {
            SmfTrackLayout::Format0 => 0,
            SmfTrackLayout::Format1 { .. } => (track % 16) as u8,
        };
        let on = map.ticks(note.onset);
        let off = map.ticks(note.offset);
        end_tick = end_tick.max(off);
        let vel_zero = velocity_zero_every > 0 && (i + 1) % velocity_zero_every == 0;
        let off_bytes = if vel_zero {
            vec![0x90 | channel, note.pitch, 0]
        } else {
            vec![0x80 | channel, note.pitch, 0]
        };
        note_events[track].push(Ev {
            tick: on,
            order: 2,
            bytes: vec![0x90 | channel, note.pitch, note.velocity.max(1)],
        });
        note_events[track].push(Ev {
            tick: off,
            // releases sort before same-tick onsets, except a zero-length note's own release
            order: if off == on { 3 } else { 1 },
            bytes: off_bytes,
        });
    }
    let mut out = b"MThd".to_vec();
    out.extend(6u32.to_be_bytes());
    match layout {
        SmfTrackLayout::Format0 => {
            out.extend(0u16.to_be_bytes());
            out.extend(1u16.to_be_bytes());
            out.extend(map.ticks_per_quarter().to_be_bytes());
            let mut events = tempo_events;
            events.extend(note_events.pop().unwrap_or_default());
            out.extend(encode_track(events, end_tick));
        }
        SmfTrackLayout::Format1 { .. } => {
            out.extend(1u16.to_be_bytes());
            out.extend(((n_note_tracks + 1) as u16).to_be_bytes());
            out.extend(map.ticks_per_quarter().to_be_bytes());
            out.extend(encode_track(tempo_events, 0));
            for events in note_events {
                out.extend(encode_track(events, end_tick));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::read_varlen;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn varlen_round_trip(v in 0u32..(1 << 28)) {
            let mut buf = Vec::new();
            write_varlen(v, &mut buf);
            prop_assert!(buf.len() <= 4);
            prop_assert_eq!(read_varlen(&buf, 0).unwrap(), (v, buf.len()));
        }
    }
}
