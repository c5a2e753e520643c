mod common;

use common::{compare_rolls, dft_magnitudes, random_grid_notes, GridNote};
use composer_id::features::{
    decode_cache, extract_rolls, hann_window, log_mel_spectrogram, mel_filterbank, mel_frequencies, read_cache,
    stack_channels, stft_magnitude, write_cache, CacheRecord, InputVariant, LogMelConfig, LOG_FLOOR,
};
use composer_id::synth::sine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn rolls_match_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..150 {
        let fps = [10, 25, 50, 100][rng.gen_range(0..4)];
        let notes = random_grid_notes(&mut rng, 40_000, 120, 1000 / fps);
        let start_ms = rng.gen_range(0..20_000);
        let duration_ms = [30_000, 1_000, rng.gen_range(100..10_000)][rng.gen_range(0..3)];
        compare_rolls(&notes, start_ms, duration_ms, fps).unwrap();
    }
}

#[test]
fn boundary_cases() {
    let n = |pitch, on_ms, off_ms| GridNote { pitch, on_ms, off_ms, velocity: 90 };
    let notes = [
        // starts exactly at the window start, ends exactly on a frame edge
        n(60, 1000, 1290),
        // zero length
        n(61, 1500, 1500),
        // began before the window and still sounding
        n(62, 500, 1600),
        // onset on the window end: excluded
        n(63, 2000, 2500),
        // ends on the window start: excluded
        n(64, 200, 1000),
        n(21, 1000, 1010),
        n(108, 1990, 2000),
    ];
    compare_rolls(&notes, 1000, 1000, 100).unwrap();
    let rolls = extract_rolls(&common::to_piece(&notes), 1.0, 1.0, 100.0);
    let col = |p: u8| (p - 21) as usize;
    assert_eq!(rolls.frame.get(28, col(60)), 1.0);
    assert_eq!(rolls.frame.get(29, col(60)), 0.0);
    assert_eq!(rolls.onset.get(50, col(61)), 1.0);
    assert_eq!(rolls.frame.get(0, col(62)), 1.0);
    assert_eq!(rolls.onset.get(0, col(62)), 0.0);
    assert!(rolls.frame.data.chunks(88).all(|row| row[col(63)] == 0.0 && row[col(64)] == 0.0));
}

#[test]
fn overlapping_notes_keep_the_loudest_velocity() {
    let notes = [
        GridNote { pitch: 60, on_ms: 0, off_ms: 1000, velocity: 40 },
        GridNote { pitch: 60, on_ms: 500, off_ms: 700, velocity: 120 },
    ];
    let rolls = extract_rolls(&common::to_piece(&notes), 0.0, 1.0, 10.0);
    let v: Vec<f32> = (0..10).map(|t| rolls.velocity.get(t, 39)).collect();
    assert_eq!(v[4], 40.0 / 127.0);
    assert_eq!(v[5], 120.0 / 127.0);
    assert_eq!(v[7], 40.0 / 127.0);
}

#[test]
fn stack_channels_order_and_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let notes = random_grid_notes(&mut rng, 5000, 40, 10);
    let rolls = extract_rolls(&common::to_piece(&notes), 0.0, 5.0, 100.0);
    for variant in InputVariant::ALL {
        let stacked = stack_channels(&rolls, variant);
        if variant.is_audio() {
            assert!(stacked.is_err());
            continue;
        }
        let s = stacked.unwrap();
        assert_eq!((s.channels, s.rows, s.cols), (variant.channel_count(), 500, 88));
    }
    let s = stack_channels(&rolls, InputVariant::FrameOnsetVelocity).unwrap();
    assert_eq!(s.channel(0), &rolls.frame.data[..]);
    assert_eq!(s.channel(1), &rolls.onset.data[..]);
    assert_eq!(s.channel(2), &rolls.velocity.data[..]);
    let o = stack_channels(&rolls, InputVariant::Onset).unwrap();
    assert_eq!(o.channel(0), &rolls.onset.data[..]);
}

/// Builds frame `t` by hand: reflection padding by explicit mirroring.
fn padded_frame(x: &[f32], t: usize, n: usize, hop: usize) -> Vec<f64> {
    let half = n / 2;
    let mut padded: Vec<f32> = x[1..=half].iter().rev().copied().collect();
    padded.extend_from_slice(x);
    padded.extend(x[x.len() - 1 - half..x.len() - 1].iter().rev());
    let w = hann_window(n);
    (0..n).map(|i| padded[t * hop + i] as f64 * w[i]).collect()
}

#[test]
fn stft_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x: Vec<f32> = (0..700).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (n, hop) = (64, 16);
    let spec = stft_magnitude(&x, n, hop).unwrap();
    assert_eq!((spec.rows, spec.cols), (700 / 16 + 1, 33));
    for t in 0..spec.rows {
        let want = dft_magnitudes(&padded_frame(&x, t, n, hop));
        for (k, w) in want.iter().enumerate() {
            assert!((spec.get(t, k) as f64 - w).abs() < 1e-4 * (1.0 + w), "t {t} k {k}");
        }
    }
}

#[test]
fn cosine_on_bin_32() {
    let n = 1024;
    let x: Vec<f32> = (0..4096)
        .map(|i| (2.0 * std::f64::consts::PI * 32.0 * i as f64 / n as f64).cos() as f32)
        .collect();
    let spec = stft_magnitude(&x, n, 160).unwrap();
    let t = 10;
    let want = dft_magnitudes(&padded_frame(&x, t, n, 160));
    // symmetric Hann: sum of window / 2 = (N-1)/4
    assert!((want[32] - 255.75).abs() < 0.05, "{}", want[32]);
    assert!((spec.get(t, 32) as f64 - want[32]).abs() < 1e-2);
    let peak = (0..spec.cols).max_by(|&a, &b| spec.get(t, a).total_cmp(&spec.get(t, b))).unwrap();
    assert_eq!(peak, 32);
}

#[test]
fn mel_filters_are_triangles_between_their_edges() {
    let cfg = LogMelConfig::default();
    let edges = mel_frequencies(cfg.n_mels, cfg.f_min, cfg.f_max).unwrap();
    assert_eq!(edges.len(), 66);
    assert!((edges[0] - 30.0).abs() < 1e-9 && (edges[65] - 8000.0).abs() < 1e-9);
    assert!(edges.windows(2).all(|w| w[0] < w[1]));
    let fb = mel_filterbank(cfg.sample_rate, cfg.window_size, cfg.n_mels, cfg.f_min, cfg.f_max).unwrap();
    assert_eq!((fb.rows, fb.cols), (64, 513));
    let bin_hz = 16_000.0 / 1024.0;
    for m in 0..64 {
        let (lo, hi) = (edges[m], edges[m + 2]);
        for k in 0..513 {
            let w = fb.get(m, k);
            let f = k as f64 * bin_hz;
            assert!((0.0..=1.0).contains(&w));
            if w > 0.0 {
                assert!(f > lo && f < hi, "filter {m} bin {k}");
            }
        }
    }
    // filters wide enough to hold a bin all reach close to their peak
    let top = (0..513).map(|k| fb.get(63, k)).fold(0.0f32, f32::max);
    assert!(top > 0.9);
}

#[test]
fn sine_440_lands_in_a_band_covering_440() {
    let cfg = LogMelConfig::default();
    let mel = log_mel_spectrogram(&sine(440.0, 1.0, 16_000), &cfg).unwrap();
    assert_eq!(mel.values.rows, 16_000 / 160 + 1);
    assert_eq!(mel.frame_rate, 100.0);
    let edges = mel_frequencies(64, 30.0, 8000.0).unwrap();
    let t = 50;
    let row = mel.values.row(t);
    let m = (0..64).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    assert!(edges[m] < 440.0 && 440.0 < edges[m + 2], "band {m}");
}

#[test]
fn silence_is_the_log_floor() {
    let mel = log_mel_spectrogram(&vec![0.0; 8000], &LogMelConfig::default()).unwrap();
    let floor = LOG_FLOOR.ln() as f32;
    assert!(mel.values.data.iter().all(|&v| v == floor));
}

#[test]
fn cache_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.ccf");
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let notes = random_grid_notes(&mut rng, 9000, 50, 10);
    let rolls = extract_rolls(&common::to_piece(&notes), 0.0, 3.0, 100.0);
    let records: Vec<CacheRecord> = (0..3)
        .map(|i| CacheRecord {
            source_id: format!("piece é {i}"),
            label: i,
            input: stack_channels(&rolls, InputVariant::ALL[i as usize]).unwrap(),
        })
        .collect();
    write_cache(&path, &records).unwrap();
    assert_eq!(read_cache(&path).unwrap(), records);
    let bytes = std::fs::read(&path).unwrap();
    for cut in [0, 3, 5, bytes.len() - 1] {
        assert!(decode_cache(&bytes[..cut]).is_err());
    }
}
