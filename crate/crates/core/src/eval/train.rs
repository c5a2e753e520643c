use std::fmt::Write as _;

use crate::dataset::{batch_indices, collate, Sample};
use crate::error::{Error, Result};
use crate::features::InputVariant;
use crate::nn::checkpoint;
use crate::nn::{adam_step, softmax_crossentropy, AdamState, Architecture, Mode, Model, ModelConfig, SequenceSummary};

use super::metrics::{clip_report, predict_proba};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRunConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub early_stop_patience: usize,
    pub input_variant: InputVariant,
    pub architecture: Architecture,
    /// How the CRNN reduces its GRU outputs over time.
    pub summary: SequenceSummary,
    /// Divides every layer width; 1 is the full-size network.
    pub width_divisor: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            max_epochs: 100,
            batch_size: 16,
            lr: 0.001,
            seed: 0,
            early_stop_patience: 10,
            input_variant: InputVariant::FrameOnsetVelocity,
            architecture: Architecture::Cnn,
            summary: SequenceSummary::TemporalMax,
            width_divisor: 1,
        }
    }
}

impl TrainRunConfig {
    pub fn model_config(&self, num_classes: usize) -> ModelConfig {
        let mut config = ModelConfig::new(self.architecture, self.input_variant.channel_count(), num_classes);
        config.summary = self.summary;
        config.scaled(self.width_divisor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept; 0 means the initial weights.
    pub best_epoch: usize,
}

impl TrainLog {
    pub const HEADER: &'static str = "epoch\ttrain_loss\tval_macro_acc";

    /// Header line followed by one tab-separated line per epoch.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.epochs {
            let _ = writeln!(s, "{}\t{:.6}\t{:.6}", r.epoch, r.train_loss, r.val_macro_accuracy);
        }
        s
    }
}

pub struct TrainOutcome {
    /// Weights from the best validation epoch.
    pub model: Model<f32>,
    /// CCKP bytes of `model` together with the optimizer state at that epoch.
    pub checkpoint: Vec<u8>,
    pub log: TrainLog,
}

fn class_count(train: &[Sample], val: &[Sample]) -> usize {
    train.iter().chain(val).map(|s| s.label + 1).max().unwrap_or(0)
}

/// Adam + cross entropy over shuffled mini-batches, with early stopping on
/// validation clip macro accuracy.
pub fn train(config: &TrainRunConfig, num_classes: usize, train: &[Sample], val: &[Sample]) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let needed = class_count(train, val);
    if needed > num_classes {
        return Err(Error::InvalidLabel {
            label: needed - 1,
            classes: num_classes,
        });
    }
    let channels = config.input_variant.channel_count();
    if let Some(s) = train.iter().chain(val).find(|s| s.input.channels != channels) {
        return Err(Error::Shape(format!(
            "clip from {} has {} channels, {} expects {channels}",
            s.source_id, s.input.channels, config.input_variant
        )));
    }

    let mut model = Model::<f32>::new(config.model_config(num_classes), config.seed)?;
    let mut opt = AdamState::<f32>::new(config.lr);
    let mut log = TrainLog::default();
    let mut best_checkpoint = checkpoint::encode(&mut model, Some(&opt))?;
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut stale = 0;

    let names: Vec<String> = (0..num_classes).map(|i| i.to_string()).collect();
    let val_labels: Vec<usize> = val.iter().map(|s| s.label).collect();
    let val_ids: Vec<&str> = val.iter().map(|s| s.source_id.as_str()).collect();

    for epoch in 1..=config.max_epochs {
        model.reseed_dropout(config.seed ^ (epoch as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (b, indices) in batch_indices(train.len(), config.batch_size, config.seed, epoch as u64)
            .iter()
            .enumerate()
        {
            let batch: Vec<&Sample> = indices.iter().map(|&i| &train[i]).collect();
            let (x, labels) = collate(&batch)?;
            model.zero_grad();
            let logits = model.forward(x, Mode::Train, true)?;
            let (loss, grad) = softmax_crossentropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            model.backward(grad)?;
            adam_step(&mut model.params_mut(), &mut opt)?;
            loss_sum += loss as f64 * labels.len() as f64;
            seen += labels.len();
        }

        let probs = predict_proba(&mut model, val, config.batch_size)?;
        let accuracy = clip_report(&probs, &val_labels, &val_ids, &names)?.macro_accuracy;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_macro_accuracy: accuracy,
        });
        if accuracy > best_accuracy {
            best_accuracy = accuracy;
            best_checkpoint = checkpoint::encode(&mut model, Some(&opt))?;
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                break;
            }
        }
    }

    let (model, _) = checkpoint::decode(&best_checkpoint, &config.model_config(num_classes))?;
    Ok(TrainOutcome {
        model,
        checkpoint: best_checkpoint,
        log,
    })
}
