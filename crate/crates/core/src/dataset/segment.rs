pub const CLIP_SECONDS: f64 = 30.0;
/// A trailing partial window is kept (zero-padded) when at least this long.
pub const MIN_TAIL: f64 = 15.0;
/// Pieces shorter than [`MIN_TAIL`] give one padded clip when at least this long.
pub const MIN_SHORT_PIECE: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub source_id: String,
    pub start: f64,
    pub duration: f64,
    pub label: usize,
}

/// Window start times tiling a piece of `piece_duration` seconds.
pub fn segment(piece_duration: f64, clip_len: f64) -> Vec<f64> {
    if !(piece_duration > 0.0) || !(clip_len > 0.0) {
        return Vec::new();
    }
    let full = (piece_duration / clip_len).floor() as usize;
    let mut starts: Vec<f64> = (0..full).map(|i| i as f64 * clip_len).collect();
    let tail = piece_duration - full as f64 * clip_len;
    let min_tail = MIN_TAIL * clip_len / CLIP_SECONDS;
    let min_short = MIN_SHORT_PIECE * clip_len / CLIP_SECONDS;
    if full == 0 {
        if piece_duration >= min_short {
            starts.push(0.0);
        }
    } else if tail >= min_tail {
        starts.push(full as f64 * clip_len);
    }
    starts
}
