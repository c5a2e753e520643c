use super::Matrix;
use crate::midi::{MidiPiece, PITCH_MIN};

pub const PITCH_COUNT: usize = 88;
pub const DEFAULT_FPS: f64 = 100.0;

/// Frame, onset and velocity rolls of one clip, each T×88.
#[derive(Clone, Debug, PartialEq)]
pub struct RollSet {
    pub frame: Matrix,
    pub onset: Matrix,
    pub velocity: Matrix,
    pub fps: f64,
}

impl RollSet {
    pub fn frames(&self) -> usize {
        self.frame.rows
    }
}

/// Positions this close below a frame boundary count as on it, so decimal
/// times such as 0.29 s at 100 fps land in frame 29 rather than 28.
const FRAME_SNAP: f64 = 1e-6;

/// Frame span `[first, end)` of a note relative to `start`, before clamping.
/// Notes shorter than one frame still cover their onset frame.
pub(crate) fn note_frames(onset: f64, offset: f64, start: f64, fps: f64) -> (i64, i64) {
    let first = ((onset - start) * fps + FRAME_SNAP).floor() as i64;
    let end = ((offset - start) * fps + FRAME_SNAP).floor() as i64;
    (first, end.max(first + 1))
}

/// Rasterizes the notes of `piece` inside `[start, start + duration)`.
pub fn extract_rolls(piece: &MidiPiece, start: f64, duration: f64, fps: f64) -> RollSet {
    assert!(fps > 0.0 && duration > 0.0 && start >= 0.0, "invalid roll window");
    let t_len = (duration * fps).round() as usize;
    let mut frame = Matrix::zeros(t_len, PITCH_COUNT);
    let mut onset = Matrix::zeros(t_len, PITCH_COUNT);
    let mut velocity = Matrix::zeros(t_len, PITCH_COUNT);
    let t_max = t_len as i64;
    for note in &piece.notes {
        let Some(col) = (note.pitch as usize).checked_sub(PITCH_MIN as usize).filter(|&c| c < PITCH_COUNT) else {
            continue;
        };
        let (first, end) = note_frames(note.onset, note.offset, start, fps);
        if end <= 0 || first >= t_max {
            continue;
        }
        let vel = note.velocity as f32 / 127.0;
        for t in first.max(0)..end.min(t_max) {
            let t = t as usize;
            frame.set(t, col, 1.0);
            if vel > velocity.get(t, col) {
                velocity.set(t, col, vel);
            }
        }
        if first >= 0 {
            onset.set(first as usize, col, 1.0);
        }
    }
    RollSet {
        frame,
        onset,
        velocity,
        fps,
    }
}
