//! Log-mel spectrogram of a sine tone (or a 16 kHz mono WAV) and the band
//! that peaks in the middle frame.
//! Usage: cargo run --example log_mel [frequency_hz | file.wav]

use composer_id::features::{log_mel_spectrogram, mel_frequencies, read_wav, LogMelConfig};
use composer_id::synth::sine;

fn main() -> composer_id::Result<()> {
    let cfg = LogMelConfig::default();
    let arg = std::env::args().nth(1).unwrap_or_else(|| "440".into());
    let samples = match arg.parse::<f64>() {
        Ok(f) => sine(f, 1.0, cfg.sample_rate),
        Err(_) => read_wav(arg.as_ref(), cfg.sample_rate)?,
    };
    let mel = log_mel_spectrogram(&samples, &cfg)?;
    let edges = mel_frequencies(cfg.n_mels, cfg.f_min, cfg.f_max)?;
    let t = mel.values.rows / 2;
    let row = mel.values.row(t);
    let m = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
    println!("{} frames x {} bands at {} Hz frame rate", mel.values.rows, mel.values.cols, mel.frame_rate);
    println!(
        "frame {t}: peak band {m} ({:.1} to {:.1} Hz, centre {:.1} Hz), log energy {:.2}",
        edges[m],
        edges[m + 2],
        edges[m + 1],
        row[m]
    );
    Ok(())
}
