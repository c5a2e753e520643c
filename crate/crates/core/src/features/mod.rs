//! Input representations: piano rolls from MIDI and log-mel spectrograms from audio.

mod audio;
mod cache;
mod rolls;
mod stack;

pub use audio::{
    hann_window, hz_to_mel, log_mel, log_mel_spectrogram, mel_filterbank, mel_frequencies, mel_to_hz, read_wav,
    stft_magnitude, LogMelConfig, MelSpectrogram, LOG_FLOOR,
};
pub use cache::{decode_cache, read_cache, write_cache, CacheRecord, CACHE_MAGIC};
pub use rolls::{extract_rolls, RollSet, DEFAULT_FPS, PITCH_COUNT};
pub use stack::{stack_channels, InputStack, InputVariant};

/// Dense row-major matrix of `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}
