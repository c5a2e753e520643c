use std::collections::{HashMap, VecDeque};

use super::tempo::TempoMap;
use super::{MidiPiece, NoteEvent, PITCH_MAX, PITCH_MIN};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Extend note-offs that happen while the sustain pedal (CC64) is down
    /// to the pedal release.
    pub sustain_pedal: bool,
}

/// Decodes a variable-length quantity at `pos`; returns the value and the
/// position just past it.
pub fn read_varlen(bytes: &[u8], pos: usize) -> Result<(u32, usize)> {
    let mut value: u32 = 0;
    for i in 0..4 {
        let b = *bytes
            .get(pos + i)
            .ok_or_else(|| Error::midi(pos + i, "truncated variable-length quantity"))?;
        value = (value << 7) | (b & 0x7F) as u32;
        if b & 0x80 == 0 {
            return Ok((value, pos + i + 1));
        }
    }
    Err(Error::midi(pos, "variable-length quantity longer than 4 bytes"))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| Error::midi(self.pos, "unexpected end of data"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::midi(self.pos, format!("need {n} bytes, {} left", self.bytes.len() - self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn varlen(&mut self) -> Result<u32> {
        let (v, next) = read_varlen(self.bytes, self.pos)?;
        self.pos = next;
        Ok(v)
    }
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

/// A note still in ticks, before tempo conversion.
struct TickNote {
    channel: u8,
    pitch: u8,
    on: u64,
    off: u64,
    velocity: u8,
}

#[derive(Default)]
struct Track {
    notes: Vec<TickNote>,
    tempos: Vec<(u64, u32)>,
    /// (tick, channel, pedal down)
    pedal: Vec<(u64, u8, bool)>,
}

/// `data` is the track body; `base` its offset within the file.
fn parse_track(data: &[u8], base: usize) -> Result<Track> {
    let mut cur = Cursor { bytes: data, pos: 0 };
    let mut track = Track::default();
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
    let at = |pos: usize| base + pos;
    while cur.pos < data.len() {
        let delta = cur.varlen().map_err(|e| rebase(e, base))?;
        tick += delta as u64;
        let status_pos = cur.pos;
        let first = cur.byte().map_err(|e| rebase(e, base))?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            match running {
                Some(s) => (s, Some(first)),
                None => return Err(Error::midi(at(status_pos), "data byte without running status")),
            }
        };
        match status {
            0xFF => {
                running = None;
                let kind = cur.byte().map_err(|e| rebase(e, base))?;
                let len = cur.varlen().map_err(|e| rebase(e, base))? as usize;
                let body = cur.take(len).map_err(|e| rebase(e, base))?;
                match kind {
                    0x51 => {
                        if len != 3 {
                            return Err(Error::midi(at(status_pos), format!("tempo event of length {len}")));
                        }
                        let tempo = u32::from_be_bytes([0, body[0], body[1], body[2]]);
                        if tempo == 0 {
                            return Err(Error::midi(at(status_pos), "zero tempo"));
                        }
                        track.tempos.push((tick, tempo));
                    }
                    0x2F => break,
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = cur.varlen().map_err(|e| rebase(e, base))? as usize;
                cur.take(len).map_err(|e| rebase(e, base))?;
            }
            0xF1..=0xFE => {
                return Err(Error::midi(at(status_pos), format!("system message 0x{status:02X} inside a track")));
            }
            _ => {
                running = Some(status);
                let kind = status & 0xF0;
                let channel = status & 0x0F;
                let data_len = if kind == 0xC0 || kind == 0xD0 { 1 } else { 2 };
                let mut args = [0u8; 2];
                for (i, slot) in args.iter_mut().enumerate().take(data_len) {
                    *slot = match (i, first_data) {
                        (0, Some(b)) => b,
                        _ => cur.byte().map_err(|e| rebase(e, base))?,
                    };
                    if *slot & 0x80 != 0 {
                        return Err(Error::midi(at(cur.pos - 1), "status byte where data byte expected"));
                    }
                }
                match kind {
                    0x90 if args[1] > 0 => {
                        open.entry((channel, args[0])).or_default().push_back((tick, args[1]));
                    }
                    0x80 | 0x90 => {
                        if let Some((on, velocity)) = open.get_mut(&(channel, args[0])).and_then(|q| q.pop_front()) {
                            track.notes.push(TickNote {
                                channel,
                                pitch: args[0],
                                on,
                                off: tick,
                                velocity,
                            });
                        }
                    }
                    0xB0 if args[0] == 64 => track.pedal.push((tick, channel, args[1] >= 64)),
                    _ => {}
                }
            }
        }
    }
    // Close whatever is still sounding at the end of the track.
    let mut leftovers: Vec<_> = open.into_iter().collect();
    leftovers.sort_by_key(|&((c, p), _)| (c, p));
    for ((channel, pitch), queue) in leftovers {
        for (on, velocity) in queue {
            track.notes.push(TickNote {
                channel,
                pitch,
                on,
                off: tick,
                velocity,
            });
        }
    }
    Ok(track)
}

fn rebase(e: Error, base: usize) -> Error {
    match e {
        Error::MalformedMidi { offset, reason } => Error::MalformedMidi {
            offset: offset + base,
            reason,
        },
        other => other,
    }
}

/// Moves note-offs that fall while the pedal is down to the pedal release,
/// never past the next onset of the same key on the same channel.
fn apply_pedal(track: &mut Track) {
    let mut by_channel: HashMap<u8, Vec<(u64, bool)>> = HashMap::new();
    for &(tick, ch, down) in &track.pedal {
        by_channel.entry(ch).or_default().push((tick, down));
    }
    let mut next_on: HashMap<(u8, u8), Vec<u64>> = HashMap::new();
    for n in &track.notes {
        next_on.entry((n.channel, n.pitch)).or_default().push(n.on);
    }
    next_on.values_mut().for_each(|v| v.sort_unstable());
    for n in &mut track.notes {
        let Some(events) = by_channel.get(&n.channel) else { continue };
        let down_at_off = events.iter().filter(|&&(t, _)| t <= n.off).last().map_or(false, |&(_, d)| d);
        if !down_at_off {
            continue;
        }
        let release = events.iter().find(|&&(t, d)| t > n.off && !d).map(|&(t, _)| t);
        let mut new_off = release.unwrap_or(n.off);
        if let Some(&next) = next_on[&(n.channel, n.pitch)].iter().find(|&&t| t > n.on) {
            new_off = new_off.min(next);
        }
        n.off = n.off.max(new_off);
    }
}

pub fn parse_midi(bytes: &[u8]) -> Result<MidiPiece> {
    parse_midi_with(bytes, ParseOptions::default())
}

/// Parses a format 0/1 Standard MIDI File with metrical timing.
pub fn parse_midi_with(bytes: &[u8], options: ParseOptions) -> Result<MidiPiece> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 14 || &bytes[..4] != b"MThd" {
        return Err(Error::midi(0, "missing MThd header"));
    }
    cur.pos = 4;
    let header_len = be_u32(cur.take(4)?) as usize;
    if header_len < 6 {
        return Err(Error::midi(4, format!("header length {header_len} < 6")));
    }
    let header = cur.take(header_len)?;
    let format = be_u16(&header[0..2]);
    let n_tracks = be_u16(&header[2..4]);
    let division = be_u16(&header[4..6]);
    if format > 1 {
        return Err(Error::midi(8, format!("unsupported SMF format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(Error::midi(12, "SMPTE time division is not supported"));
    }
    if division == 0 {
        return Err(Error::midi(12, "zero ticks per quarter"));
    }
    let mut tracks = Vec::new();
    while cur.pos < bytes.len() && tracks.len() < n_tracks as usize {
        let chunk_at = cur.pos;
        let id = cur.take(4).map_err(|_| Error::midi(chunk_at, "truncated chunk header"))?;
        let len = be_u32(cur.take(4).map_err(|_| Error::midi(chunk_at, "truncated chunk header"))?) as usize;
        if bytes.len() - cur.pos < len {
            return Err(Error::midi(chunk_at + 4, format!("chunk length {len} runs past end of file")));
        }
        let body_at = cur.pos;
        let body = cur.take(len)?;
        if id == b"MTrk" {
            let mut track = parse_track(body, body_at)?;
            if options.sustain_pedal {
                apply_pedal(&mut track);
            }
            tracks.push(track);
        }
    }
    if tracks.len() < n_tracks as usize {
        return Err(Error::midi(cur.pos, format!("expected {n_tracks} tracks, found {}", tracks.len())));
    }
    let map = TempoMap::new(division, tracks.iter().flat_map(|t| t.tempos.iter().copied()))?;
    let notes = tracks
        .into_iter()
        .flat_map(|t| t.notes)
        .filter(|n| (PITCH_MIN..=PITCH_MAX).contains(&n.pitch))
        .map(|n| NoteEvent {
            pitch: n.pitch,
            onset: map.seconds(n.on),
            offset: map.seconds(n.off),
            velocity: n.velocity,
        })
        .collect();
    Ok(MidiPiece::new(notes, "", ""))
}
