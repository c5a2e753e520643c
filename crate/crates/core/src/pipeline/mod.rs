//! End-to-end commands: ingest, extract, split, train, eval, predict and
//! run_experiment. Each reads and writes files under the configured `out_dir`.

mod commands;
mod config;

pub use commands::{
    clip_records, eval, extract, extract_catalog, in_memory_experiment, ingest, logmel_clip_records, parse_corpus_file_name, predict,
    records_to_samples, run_experiment, scan_midi_dir, split, train, worker_threads, Artifacts, CorpusFile, IngestSummary, MemoryRun,
    Prediction,
};
pub use config::{ExperimentConfig, CONFIG_KEYS};
