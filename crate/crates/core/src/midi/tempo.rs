use crate::error::{Error, Result};

/// Microseconds per quarter note when a file sets no tempo (120 BPM).
pub const DEFAULT_TEMPO: u32 = 500_000;

/// Tempo changes keyed by tick, always starting at tick 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TempoMap {
    ticks_per_quarter: u16,
    entries: Vec<(u64, u32)>,
    /// Seconds elapsed at each entry's tick.
    starts: Vec<f64>,
}

impl TempoMap {
    /// Builds a map from (tick, µs per quarter) changes in any order. Later
    /// changes at an already-seen tick replace earlier ones; an entry
    /// (0, 500000) is implied when nothing is set at tick 0.
    pub fn new(ticks_per_quarter: u16, changes: impl IntoIterator<Item = (u64, u32)>) -> Result<Self> {
        if ticks_per_quarter == 0 {
            return Err(Error::InvalidArgument("ticks per quarter must be positive".into()));
        }
        let mut entries: Vec<(u64, u32)> = Vec::new();
        let mut changes: Vec<(u64, u32)> = changes.into_iter().collect();
        changes.sort_by_key(|&(tick, _)| tick);
        for (tick, tempo) in changes {
            if tempo == 0 {
                return Err(Error::InvalidArgument(format!("zero tempo at tick {tick}")));
            }
            match entries.last_mut() {
                Some(last) if last.0 == tick => last.1 = tempo,
                _ => entries.push((tick, tempo)),
            }
        }
        if entries.first().map_or(true, |&(t, _)| t != 0) {
            entries.insert(0, (0, DEFAULT_TEMPO));
        }
        let mut starts = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for (i, &(tick, _)) in entries.iter().enumerate() {
            if i > 0 {
                let (prev_tick, prev_tempo) = entries[i - 1];
                acc += segment_seconds(tick - prev_tick, prev_tempo, ticks_per_quarter);
            }
            starts.push(acc);
        }
        Ok(TempoMap {
            ticks_per_quarter,
            entries,
            starts,
        })
    }

    pub fn constant(ticks_per_quarter: u16, tempo: u32) -> Result<Self> {
        Self::new(ticks_per_quarter, [(0, tempo)])
    }

    pub fn ticks_per_quarter(&self) -> u16 {
        self.ticks_per_quarter
    }

    pub fn entries(&self) -> &[(u64, u32)] {
        &self.entries
    }

    fn segment_index(&self, tick: u64) -> usize {
        self.entries.partition_point(|&(t, _)| t <= tick) - 1
    }

    pub fn seconds(&self, tick: u64) -> f64 {
        let i = self.segment_index(tick);
        let (start_tick, tempo) = self.entries[i];
        self.starts[i] + segment_seconds(tick - start_tick, tempo, self.ticks_per_quarter)
    }

    /// Nearest tick for a time in seconds (inverse of [`TempoMap::seconds`]).
    pub fn ticks(&self, seconds: f64) -> u64 {
        let seconds = seconds.max(0.0);
        let i = self.starts.partition_point(|&s| s <= seconds).max(1) - 1;
        let (start_tick, tempo) = self.entries[i];
        let per_tick = tempo as f64 / (self.ticks_per_quarter as f64 * 1e6);
        start_tick + ((seconds - self.starts[i]) / per_tick).round() as u64
    }
}

fn segment_seconds(ticks: u64, tempo: u32, tpq: u16) -> f64 {
    ticks as f64 * tempo as f64 / (tpq as f64 * 1e6)
}

/// Piecewise-linear tick → seconds conversion.
pub fn ticks_to_seconds(tick: u64, map: &TempoMap) -> f64 {
    map.seconds(tick)
}
