use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use crate::dataset::{
    read_manifest, read_split, segment, stratified_split, write_manifest, write_split, Catalog, CatalogEntry, Sample,
    Subset, CLIP_SECONDS,
};
use crate::error::{Error, Result};
use crate::eval::{emit_report, evaluate_clips, evaluate_pieces, predict_proba, EvalReport, TrainLog};
use crate::features::{
    extract_rolls, log_mel_spectrogram, read_cache, read_wav, stack_channels, write_cache, CacheRecord, InputStack,
    InputVariant, LogMelConfig, LOG_FLOOR,
};
use crate::midi::{parse_midi_with, MidiPiece, ParseOptions};
use crate::nn::{argmax, checkpoint};

/// File locations inside an experiment's output directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Artifacts { dir: dir.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.dir.join("manifest.tsv")
    }

    pub fn composers(&self) -> PathBuf {
        self.dir.join("composers.txt")
    }

    pub fn split(&self) -> PathBuf {
        self.dir.join("split.tsv")
    }

    pub fn features(&self) -> PathBuf {
        self.dir.join("features.ccf")
    }

    pub fn train_log(&self) -> PathBuf {
        self.dir.join("train_log.tsv")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("model.cckp")
    }

    pub fn clip_report(&self) -> PathBuf {
        self.dir.join("report_clip.tsv")
    }

    pub fn piece_report(&self) -> PathBuf {
        self.dir.join("report_piece.tsv")
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join("config.txt")
    }

    fn create(&self) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))
    }
}

/// Splits `"<Surname>, <First names>, <Title>.mid"` into the composer
/// (`"<Surname>, <First names>"`) and the source id (the title).
pub fn parse_corpus_file_name(name: &str) -> Option<(String, String)> {
    let lower = name.to_ascii_lowercase();
    let stem = if lower.ends_with(".mid") {
        &name[..name.len() - 4]
    } else if lower.ends_with(".midi") {
        &name[..name.len() - 5]
    } else {
        return None;
    };
    let mut parts = stem.splitn(3, ", ");
    let surname = parts.next()?.trim();
    let first = parts.next()?.trim();
    let title = parts.next()?.trim();
    if surname.is_empty() || first.is_empty() || title.is_empty() {
        return None;
    }
    Some((format!("{surname}, {first}"), title.to_string()))
}

/// A MIDI file found by [`scan_midi_dir`].
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusFile {
    pub path: PathBuf,
    pub composer: String,
    pub source_id: String,
}

/// MIDI files in `dir` sorted by file name, and the number of `.mid` files
/// whose names do not follow the corpus pattern.
pub fn scan_midi_dir(dir: &Path) -> Result<(Vec<CorpusFile>, usize)> {
    let mut names: Vec<(String, PathBuf)> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_file())
        .filter_map(|entry| Some((entry.file_name().into_string().ok()?, entry.path())))
        .filter(|(name, _)| {
            let lower = name.to_ascii_lowercase();
            lower.ends_with(".mid") || lower.ends_with(".midi")
        })
        .collect();
    names.sort();
    let mut files = Vec::new();
    let mut unnamed = 0;
    for (name, path) in names {
        match parse_corpus_file_name(&name) {
            Some((composer, source_id)) => files.push(CorpusFile { path, composer, source_id }),
            None => unnamed += 1,
        }
    }
    Ok((files, unnamed))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestSummary {
    pub pieces: usize,
    pub skipped: usize,
}

impl IngestSummary {
    pub fn warning(&self) -> Option<String> {
        (self.skipped > 0).then(|| format!("skipped {}", self.skipped))
    }
}

fn load_piece(file: &CorpusFile, options: ParseOptions) -> Result<MidiPiece> {
    let bytes = std::fs::read(&file.path).map_err(|e| Error::io(&file.path, e))?;
    let mut piece = parse_midi_with(&bytes, options)?;
    piece.source_id = file.source_id.clone();
    piece.composer = file.composer.clone();
    Ok(piece)
}

/// Parses every corpus file in `midi_dir` and writes the catalog manifest.
/// Files that fail to parse or are misnamed are counted, not fatal.
pub fn ingest(midi_dir: &Path, manifest_out: &Path, options: ParseOptions) -> Result<IngestSummary> {
    let (files, mut skipped) = scan_midi_dir(midi_dir)?;
    let mut entries = Vec::new();
    for file in &files {
        match load_piece(file, options) {
            Ok(piece) => entries.push(CatalogEntry {
                source_id: piece.source_id,
                composer: piece.composer,
                duration: piece.duration,
            }),
            Err(Error::MalformedMidi { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if entries.is_empty() {
        return Err(Error::Data(format!("no parseable MIDI files in {}", midi_dir.display())));
    }
    let pieces = entries.len();
    let catalog = Catalog::new(entries)?;
    if let Some(parent) = manifest_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_manifest(manifest_out, &catalog)?;
    Ok(IngestSummary { pieces, skipped })
}

/// One record per 30-second clip of `piece`, in clip order.
pub fn clip_records(piece: &MidiPiece, label: u32, variant: InputVariant, fps: f64) -> Result<Vec<CacheRecord>> {
    segment(piece.duration, CLIP_SECONDS)
        .into_iter()
        .map(|start| {
            let rolls = extract_rolls(piece, start, CLIP_SECONDS, fps);
            Ok(CacheRecord {
                source_id: piece.source_id.clone(),
                label,
                input: stack_channels(&rolls, variant)?,
            })
        })
        .collect()
}

/// Log-mel clips cut from a whole-recording spectrogram. Clip boundaries
/// follow the MIDI duration; frames past the end of the audio hold the floor.
pub fn logmel_clip_records(
    samples: &[f32],
    duration: f64,
    source_id: &str,
    label: u32,
    config: &LogMelConfig,
) -> Result<Vec<CacheRecord>> {
    let mel = log_mel_spectrogram(samples, config)?;
    let rate = mel.frame_rate;
    let rows = (CLIP_SECONDS * rate).round() as usize;
    let cols = mel.values.cols;
    let floor = LOG_FLOOR.ln() as f32;
    segment(duration, CLIP_SECONDS)
        .into_iter()
        .map(|start| {
            let first = (start * rate).round() as usize;
            let mut data = vec![floor; rows * cols];
            for r in 0..rows.min(mel.values.rows.saturating_sub(first)) {
                data[r * cols..(r + 1) * cols].copy_from_slice(mel.values.row(first + r));
            }
            Ok(CacheRecord {
                source_id: source_id.to_string(),
                label,
                input: InputStack { channels: 1, rows, cols, data },
            })
        })
        .collect()
}

/// Worker count for extraction: `CID_THREADS` if set, otherwise all cores.
pub fn worker_threads() -> Result<usize> {
    match std::env::var("CID_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("CID_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

/// Features for every piece of `catalog`, in catalog order then clip start.
/// Pieces are processed in parallel on `threads` workers (0 = all cores).
pub fn extract_catalog(
    catalog: &Catalog,
    midi_dir: &Path,
    audio_dir: Option<&Path>,
    variant: InputVariant,
    fps: f64,
    options: ParseOptions,
    threads: usize,
) -> Result<Vec<CacheRecord>> {
    use rayon::prelude::*;

    let audio_dir = match (variant.is_audio(), audio_dir) {
        (true, None) => return Err(Error::Data("no audio cache: logmel input needs audio_dir".into())),
        (true, Some(dir)) if !dir.is_dir() => {
            return Err(Error::Data(format!("no audio cache: {} is not a directory", dir.display())))
        }
        (_, dir) => dir,
    };
    let (files, _) = scan_midi_dir(midi_dir)?;
    let by_id: HashMap<&str, &CorpusFile> = files.iter().map(|f| (f.source_id.as_str(), f)).collect();
    let jobs: Vec<(&CatalogEntry, &CorpusFile, u32)> = catalog
        .pieces()
        .iter()
        .map(|entry| {
            let file = by_id
                .get(entry.source_id.as_str())
                .ok_or_else(|| Error::Data(format!("no MIDI file for {:?} in {}", entry.source_id, midi_dir.display())))?;
            let label = catalog.label(&entry.composer).expect("catalog composer") as u32;
            Ok((entry, *file, label))
        })
        .collect::<Result<_>>()?;

    let work = |(entry, file, label): &(&CatalogEntry, &CorpusFile, u32)| -> Result<Vec<CacheRecord>> {
        let piece = load_piece(file, options)?;
        match audio_dir {
            Some(dir) => {
                let config = LogMelConfig::default();
                let wav = dir.join(format!("{}.wav", entry.source_id));
                if !wav.is_file() {
                    return Err(Error::Data(format!("no audio cache entry {}", wav.display())));
                }
                let samples = read_wav(&wav, config.sample_rate)?;
                logmel_clip_records(&samples, piece.duration, &entry.source_id, *label, &config)
            }
            None => clip_records(&piece, *label, variant, fps),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let per_piece: Vec<Result<Vec<CacheRecord>>> = pool.install(|| jobs.par_iter().map(work).collect());
    let mut out = Vec::new();
    for records in per_piece {
        out.extend(records?);
    }
    Ok(out)
}

fn top_k_catalog(config: &ExperimentConfig, art: &Artifacts) -> Result<Catalog> {
    read_manifest(&art.manifest())?.select_top_k(config.k).map_err(|e| {
        Error::Config(format!("grid cell ({}, {}, k={}) invalid: {e}", config.arch, config.variant, config.k))
    })
}

fn parse_options(config: &ExperimentConfig) -> ParseOptions {
    ParseOptions {
        sustain_pedal: config.sustain_pedal,
    }
}

/// `extract` command: feature cache for the top-k composers' pieces.
pub fn extract(config: &ExperimentConfig) -> Result<usize> {
    let threads = worker_threads()?;
    let art = Artifacts::new(&config.out_dir);
    art.create()?;
    let catalog = top_k_catalog(config, &art)?;
    let records = extract_catalog(
        &catalog,
        &config.midi_dir,
        config.audio_dir.as_deref(),
        config.variant,
        config.fps as f64,
        parse_options(config),
        threads,
    )?;
    write_cache(&art.features(), &records)?;
    Ok(records.len())
}

/// `split` command: composer list (label order) and piece split for the
/// top-k composers.
pub fn split(config: &ExperimentConfig) -> Result<Catalog> {
    let art = Artifacts::new(&config.out_dir);
    art.create()?;
    let catalog = top_k_catalog(config, &art)?;
    let names = catalog.composers().join("\n") + "\n";
    std::fs::write(art.composers(), names).map_err(|e| Error::io(art.composers(), e))?;
    write_split(&art.split(), &stratified_split(&catalog, config.seed))?;
    Ok(catalog)
}

fn read_composers(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
}

pub fn records_to_samples(records: Vec<CacheRecord>) -> Vec<Sample> {
    records
        .into_iter()
        .map(|r| Sample {
            source_id: r.source_id,
            label: r.label as usize,
            input: r.input,
        })
        .collect()
}

fn load_subsets(art: &Artifacts) -> Result<HashMap<Subset, Vec<Sample>>> {
    let split = read_split(&art.split())?;
    let mut out: HashMap<Subset, Vec<Sample>> = HashMap::new();
    for sample in records_to_samples(read_cache(&art.features())?) {
        let subset = split
            .get(&sample.source_id)
            .ok_or_else(|| Error::Data(format!("clip from {:?} is not in the split", sample.source_id)))?;
        out.entry(subset).or_default().push(sample);
    }
    Ok(out)
}

/// `train` command: fits on the train subset, selects on validation, writes
/// the training log and the best checkpoint.
pub fn train(config: &ExperimentConfig) -> Result<TrainLog> {
    let art = Artifacts::new(&config.out_dir);
    let composers = read_composers(&art.composers())?;
    let mut subsets = load_subsets(&art)?;
    let train_set = subsets.remove(&Subset::Train).unwrap_or_default();
    let val_set = subsets.remove(&Subset::Validation).unwrap_or_default();
    let outcome = crate::eval::train(&config.train_config(), composers.len(), &train_set, &val_set)?;
    std::fs::write(art.train_log(), outcome.log.to_tsv()).map_err(|e| Error::io(art.train_log(), e))?;
    std::fs::write(art.checkpoint(), &outcome.checkpoint).map_err(|e| Error::io(art.checkpoint(), e))?;
    Ok(outcome.log)
}

/// `eval` command: clip-wise and piece-wise reports on the test subset.
pub fn eval(config: &ExperimentConfig) -> Result<(EvalReport, EvalReport)> {
    let art = Artifacts::new(&config.out_dir);
    let composers = read_composers(&art.composers())?;
    let model_config = config.train_config().model_config(composers.len());
    let (mut model, _) = checkpoint::load(&art.checkpoint(), &model_config)?;
    let test = load_subsets(&art)?.remove(&Subset::Test).unwrap_or_default();
    let clip = evaluate_clips(&mut model, &test, &composers, config.batch_size)?;
    let piece = evaluate_pieces(&mut model, &test, &composers, config.batch_size)?;
    emit_report(&clip, &art.clip_report())?;
    emit_report(&piece, &art.piece_report())?;
    Ok((clip, piece))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub clip_probabilities: Vec<Vec<f64>>,
    pub piece_probabilities: Vec<f64>,
    pub composer: String,
}

/// `predict` command: composer of one MIDI file under the trained model.
pub fn predict(config: &ExperimentConfig, midi_path: &Path) -> Result<Prediction> {
    if config.variant.is_audio() {
        return Err(Error::InvalidArgument("predict works on MIDI input variants only".into()));
    }
    let art = Artifacts::new(&config.out_dir);
    let composers = read_composers(&art.composers())?;
    let model_config = config.train_config().model_config(composers.len());
    let (mut model, _) = checkpoint::load(&art.checkpoint(), &model_config)?;
    let bytes = std::fs::read(midi_path).map_err(|e| Error::io(midi_path, e))?;
    let mut piece = parse_midi_with(&bytes, parse_options(config))?;
    piece.source_id = midi_path.display().to_string();
    let samples = records_to_samples(clip_records(&piece, 0, config.variant, config.fps as f64)?);
    if samples.is_empty() {
        return Err(Error::Data(format!("{} is too short to form a clip", midi_path.display())));
    }
    let clip_probabilities = predict_proba(&mut model, &samples, config.batch_size)?;
    let labels = vec![0; samples.len()];
    let ids: Vec<&str> = samples.iter().map(|s| s.source_id.as_str()).collect();
    let (_, _, piece_probabilities) = crate::eval::aggregate_pieces(&clip_probabilities, &labels, &ids)?.remove(0);
    let composer = composers[argmax(&piece_probabilities)].clone();
    Ok(Prediction {
        clip_probabilities,
        piece_probabilities,
        composer,
    })
}

/// ingest → split → extract → train → eval, plus a copy of the effective
/// configuration. Returns the clip-wise and piece-wise test reports.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(EvalReport, EvalReport)> {
    config.validate()?;
    let art = Artifacts::new(&config.out_dir);
    art.create()?;
    if config.variant.is_audio() && config.audio_dir.is_none() {
        return Err(Error::Data("no audio cache: logmel input needs audio_dir".into()));
    }
    std::fs::write(art.config(), config.to_text()).map_err(|e| Error::io(art.config(), e))?;
    ingest(&config.midi_dir, &art.manifest(), parse_options(config))?;
    split(config)?;
    extract(config)?;
    train(config)?;
    eval(config)
}

/// Result of [`in_memory_experiment`].
pub struct MemoryRun {
    pub composers: Vec<String>,
    pub split: crate::dataset::SplitAssignment,
    pub outcome: crate::eval::TrainOutcome,
    pub clip_report: EvalReport,
    pub piece_report: EvalReport,
}

/// split → features → train → test evaluation on already parsed pieces,
/// without touching the filesystem. MIDI variants only.
pub fn in_memory_experiment(pieces: &[MidiPiece], config: &ExperimentConfig) -> Result<MemoryRun> {
    use rayon::prelude::*;

    config.validate()?;
    if config.variant.is_audio() {
        return Err(Error::Data("no audio cache: logmel input needs audio files".into()));
    }
    let catalog = Catalog::new(
        pieces
            .iter()
            .map(|p| CatalogEntry {
                source_id: p.source_id.clone(),
                composer: p.composer.clone(),
                duration: p.duration,
            })
            .collect(),
    )?
    .select_top_k(config.k)?;
    let split = stratified_split(&catalog, config.seed);
    let kept: Vec<&MidiPiece> = pieces.iter().filter(|p| split.get(&p.source_id).is_some()).collect();
    let per_piece: Vec<Result<Vec<CacheRecord>>> = kept
        .par_iter()
        .map(|p| clip_records(p, catalog.label(&p.composer).expect("kept composer") as u32, config.variant, config.fps as f64))
        .collect();
    let mut subsets: HashMap<Subset, Vec<Sample>> = HashMap::new();
    for (piece, records) in kept.iter().zip(per_piece) {
        let subset = split.get(&piece.source_id).expect("kept piece");
        subsets.entry(subset).or_default().extend(records_to_samples(records?));
    }
    let composers = catalog.composers().to_vec();
    let train_set = subsets.remove(&Subset::Train).unwrap_or_default();
    let val_set = subsets.remove(&Subset::Validation).unwrap_or_default();
    let test_set = subsets.remove(&Subset::Test).unwrap_or_default();
    let mut outcome = crate::eval::train(&config.train_config(), composers.len(), &train_set, &val_set)?;
    let clip_report = evaluate_clips(&mut outcome.model, &test_set, &composers, config.batch_size)?;
    let piece_report = evaluate_pieces(&mut outcome.model, &test_set, &composers, config.batch_size)?;
    Ok(MemoryRun {
        composers,
        split,
        outcome,
        clip_report,
        piece_report,
    })
}
