use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::TrainRunConfig;
use crate::features::{InputVariant, DEFAULT_FPS};
use crate::nn::{Architecture, SequenceSummary};

/// Everything one experiment needs. Serialized as flat `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub midi_dir: PathBuf,
    /// Directory of `<source_id>.wav` files, needed only for `logmel`.
    pub audio_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Number of composers kept (those with the most pieces).
    pub k: usize,
    pub arch: Architecture,
    pub variant: InputVariant,
    pub fps: u32,
    pub sustain_pedal: bool,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub width_divisor: usize,
    pub crnn_summary: SequenceSummary,
}

pub const CONFIG_KEYS: [&str; 15] = [
    "midi_dir",
    "audio_dir",
    "out_dir",
    "seed",
    "k",
    "arch",
    "variant",
    "fps",
    "sustain_pedal",
    "max_epochs",
    "patience",
    "batch_size",
    "lr",
    "width_divisor",
    "crnn_summary",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            midi_dir: PathBuf::from("midi"),
            audio_dir: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            k: 10,
            arch: Architecture::Crnn,
            variant: InputVariant::FrameOnsetVelocity,
            fps: DEFAULT_FPS as u32,
            sustain_pedal: false,
            max_epochs: 100,
            patience: 10,
            batch_size: 16,
            lr: 0.001,
            width_divisor: 1,
            crnn_summary: SequenceSummary::TemporalMax,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key:?}")))
}

impl ExperimentConfig {
    /// Sets one key; unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "midi_dir" => self.midi_dir = PathBuf::from(value),
            "audio_dir" => self.audio_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "arch" => self.arch = parse_value(key, value)?,
            "variant" => self.variant = parse_value(key, value)?,
            "fps" => self.fps = parse_value(key, value)?,
            "sustain_pedal" => self.sustain_pedal = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "width_divisor" => self.width_divisor = parse_value(key, value)?,
            "crnn_summary" => self.crnn_summary = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// All keys, one per line, in [`CONFIG_KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(s, "{key} = {}", self.value(key));
        }
        s
    }

    fn value(&self, key: &str) -> String {
        match key {
            "midi_dir" => self.midi_dir.display().to_string(),
            "audio_dir" => self.audio_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "out_dir" => self.out_dir.display().to_string(),
            "seed" => self.seed.to_string(),
            "k" => self.k.to_string(),
            "arch" => self.arch.to_string(),
            "variant" => self.variant.to_string(),
            "fps" => self.fps.to_string(),
            "sustain_pedal" => self.sustain_pedal.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "patience" => self.patience.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr" => self.lr.to_string(),
            "width_divisor" => self.width_divisor.to_string(),
            "crnn_summary" => self.crnn_summary.to_string(),
            _ => unreachable!("key list and accessor disagree"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cell = || format!("grid cell ({}, {}, k={})", self.arch, self.variant, self.k);
        if self.k < 2 {
            return Err(Error::Config(format!("{}: k must be at least 2", cell())));
        }
        if self.fps == 0 {
            return Err(Error::Config("fps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.width_divisor == 0 || crate::nn::CONV_LADDER.iter().any(|c| c % self.width_divisor != 0) {
            return Err(Error::Config(format!("width_divisor {} must divide 64", self.width_divisor)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainRunConfig {
        TrainRunConfig {
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            early_stop_patience: self.patience,
            input_variant: self.variant,
            architecture: self.arch,
            summary: self.crnn_summary,
            width_divisor: self.width_divisor,
        }
    }
}
