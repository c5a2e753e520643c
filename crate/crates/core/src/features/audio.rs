//! STFT magnitude and log-mel front end.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::Matrix;
use crate::error::{Error, Result};

/// Floor applied before the natural log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LogMelConfig {
    pub sample_rate: u32,
    pub window_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for LogMelConfig {
    fn default() -> Self {
        LogMelConfig {
            sample_rate: 16_000,
            window_size: 1024,
            hop: 160,
            n_mels: 64,
            f_min: 30.0,
            f_max: 8000.0,
        }
    }
}

impl LogMelConfig {
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }
}

/// T×F natural-log mel magnitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub values: Matrix,
    pub frame_rate: f64,
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// `n_mels + 2` band edges equally spaced on the mel scale.
pub fn mel_frequencies(n_mels: usize, f_min: f64, f_max: f64) -> Result<Vec<f64>> {
    if n_mels == 0 || !(0.0..f_max).contains(&f_min) {
        return Err(Error::InvalidArgument(format!(
            "mel range needs 0 <= f_min < f_max and n_mels >= 1 (got {n_mels}, {f_min}, {f_max})"
        )));
    }
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let step = (hi - lo) / (n_mels + 1) as f64;
    Ok((0..n_mels + 2)
        .map(|i| match i {
            0 => f_min,
            i if i == n_mels + 1 => f_max,
            i => mel_to_hz(lo + step * i as f64),
        })
        .collect())
}

/// Triangular filters (peak 1) over the one-sided FFT bins, `n_mels × (n_fft/2 + 1)`.
pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize, f_min: f64, f_max: f64) -> Result<Matrix> {
    let edges = mel_frequencies(n_mels, f_min, f_max)?;
    let bins = n_fft / 2 + 1;
    let mut fb = Matrix::zeros(n_mels, bins);
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            fb.set(m, k, w as f32);
        }
    }
    Ok(fb)
}

/// Symmetric Hann window `0.5 − 0.5·cos(2πn/(N−1))`.
pub fn hann_window(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Magnitude of the one-sided STFT with centered, reflection-padded frames;
/// returns `floor(len/hop) + 1` rows of `window_size/2 + 1` bins.
pub fn stft_magnitude(samples: &[f32], window_size: usize, hop: usize) -> Result<Matrix> {
    if !window_size.is_power_of_two() || hop == 0 {
        return Err(Error::InvalidArgument(format!(
            "window size {window_size} must be a power of two and hop {hop} positive"
        )));
    }
    let bins = window_size / 2 + 1;
    if samples.is_empty() {
        return Ok(Matrix::zeros(0, bins));
    }
    let frames = samples.len() / hop + 1;
    let window = hann_window(window_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_size);
    let mut buf = vec![Complex::new(0.0, 0.0); window_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Matrix::zeros(frames, bins);
    let half = (window_size / 2) as isize;
    for t in 0..frames {
        let center = (t * hop) as isize;
        for (n, slot) in buf.iter_mut().enumerate() {
            let idx = reflect(center - half + n as isize, samples.len());
            *slot = Complex::new(samples[idx] as f64 * window[n], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, c) in buf.iter().take(bins).enumerate() {
            out.set(t, k, c.norm() as f32);
        }
    }
    Ok(out)
}

/// `ln(max(spec · filterbankᵀ, 1e-10))`.
pub fn log_mel(spec: &Matrix, filterbank: &Matrix, frame_rate: f64) -> Result<MelSpectrogram> {
    if spec.cols != filterbank.cols {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, filterbank {}",
            spec.cols, filterbank.cols
        )));
    }
    let mut values = Matrix::zeros(spec.rows, filterbank.rows);
    for t in 0..spec.rows {
        let row = spec.row(t);
        for m in 0..filterbank.rows {
            let e: f64 = row
                .iter()
                .zip(filterbank.row(m))
                .map(|(&a, &w)| a as f64 * w as f64)
                .sum();
            values.set(t, m, e.max(LOG_FLOOR).ln() as f32);
        }
    }
    Ok(MelSpectrogram { values, frame_rate })
}

pub fn log_mel_spectrogram(samples: &[f32], config: &LogMelConfig) -> Result<MelSpectrogram> {
    let spec = stft_magnitude(samples, config.window_size, config.hop)?;
    let fb = mel_filterbank(config.sample_rate, config.window_size, config.n_mels, config.f_min, config.f_max)?;
    log_mel(&spec, &fb, config.frame_rate())
}

/// Reads a mono 16-bit PCM WAV at the expected sample rate into [-1, 1) floats.
pub fn read_wav(path: &Path, sample_rate: u32) -> Result<Vec<f32>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Data(format!("{}: expected mono 16-bit PCM", path.display())));
    }
    if spec.sample_rate != sample_rate {
        return Err(Error::Data(format!(
            "{}: sample rate {} (expected {sample_rate})",
            path.display(),
            spec.sample_rate
        )));
    }
    reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_points() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
        assert!((hz_to_mel(700.0) - 781.1728).abs() < 1e-4);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn single_band_edges() {
        let edges = mel_frequencies(1, 0.0, 8000.0).unwrap();
        let mid = mel_to_hz(hz_to_mel(8000.0) / 2.0);
        assert_eq!(edges.len(), 3);
        assert_eq!(edges[0], 0.0);
        assert_eq!(edges[2], 8000.0);
        assert!((edges[1] - mid).abs() < 1e-9);
        // 700·(√(1 + 8000/700) − 1)
        assert!((edges[1] - 1767.7925).abs() < 1e-3, "{}", edges[1]);
    }

    #[test]
    fn invalid_mel_range() {
        assert!(mel_frequencies(64, 8000.0, 30.0).is_err());
        assert!(mel_frequencies(0, 0.0, 100.0).is_err());
        assert!(mel_frequencies(4, -1.0, 100.0).is_err());
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let spec = stft_magnitude(&vec![0.0; 16000], 1024, 160).unwrap();
        assert_eq!((spec.rows, spec.cols), (101, 513));
        assert!(spec.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_signal_gives_no_frames() {
        let spec = stft_magnitude(&[], 1024, 160).unwrap();
        assert_eq!(spec.rows, 0);
    }

    #[test]
    fn rejects_bad_window() {
        assert!(stft_magnitude(&[0.0; 10], 1000, 160).is_err());
        assert!(stft_magnitude(&[0.0; 10], 1024, 0).is_err());
    }

    #[test]
    fn filterbank_rows_cover_spectrum() {
        let fb = mel_filterbank(16000, 1024, 64, 30.0, 8000.0).unwrap();
        assert_eq!((fb.rows, fb.cols), (64, 513));
        for m in 0..64 {
            assert!(fb.row(m).iter().sum::<f32>() > 0.0, "row {m} empty");
        }
    }

    #[test]
    fn zero_spectrogram_hits_floor() {
        let fb = mel_filterbank(16000, 1024, 64, 30.0, 8000.0).unwrap();
        let mel = log_mel(&Matrix::zeros(5, 513), &fb, 100.0).unwrap();
        for &v in &mel.values.data {
            assert!((v as f64 - (1e-10f64).ln()).abs() < 1e-5);
            assert!((v - -23.0259).abs() < 1e-3);
        }
    }

    #[test]
    fn spike_under_one_peak() {
        let fb = mel_filterbank(16000, 1024, 64, 30.0, 8000.0).unwrap();
        // strongest single weight in filter 20
        let (k, w) = fb.row(20).iter().copied().enumerate().fold((0, 0.0f32), |a, (i, v)| if v > a.1 { (i, v) } else { a });
        let mut spec = Matrix::zeros(1, 513);
        spec.set(0, k, 3.0);
        let mel = log_mel(&spec, &fb, 100.0).unwrap();
        for m in 0..64 {
            let weight = fb.get(m, k) as f64;
            let want = (3.0 * weight).max(LOG_FLOOR).ln();
            assert!((mel.values.get(0, m) as f64 - want).abs() < 1e-5);
        }
        assert!((mel.values.get(0, 20) as f64 - (3.0 * w as f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let fb = mel_filterbank(16000, 1024, 64, 30.0, 8000.0).unwrap();
        assert!(log_mel(&Matrix::zeros(2, 257), &fb, 100.0).is_err());
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-4, 5), 4);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(9, 5), 1);
        assert_eq!(reflect(3, 1), 0);
    }
}
