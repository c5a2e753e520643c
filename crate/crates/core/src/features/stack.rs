use std::fmt;
use std::str::FromStr;

use super::audio::MelSpectrogram;
use super::rolls::RollSet;
use super::Matrix;
use crate::error::{Error, Result};

/// Input representation fed to the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InputVariant {
    Frame,
    Onset,
    FrameOnset,
    FrameOnsetVelocity,
    LogMel,
}

impl InputVariant {
    pub const ALL: [InputVariant; 5] = [
        InputVariant::Frame,
        InputVariant::Onset,
        InputVariant::FrameOnset,
        InputVariant::FrameOnsetVelocity,
        InputVariant::LogMel,
    ];

    pub fn channel_count(self) -> usize {
        match self {
            InputVariant::Frame | InputVariant::Onset | InputVariant::LogMel => 1,
            InputVariant::FrameOnset => 2,
            InputVariant::FrameOnsetVelocity => 3,
        }
    }

    pub fn is_audio(self) -> bool {
        self == InputVariant::LogMel
    }
}

impl FromStr for InputVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame" => Ok(InputVariant::Frame),
            "onset" => Ok(InputVariant::Onset),
            "frame+onset" => Ok(InputVariant::FrameOnset),
            "frame+onset+velocity" => Ok(InputVariant::FrameOnsetVelocity),
            "logmel" => Ok(InputVariant::LogMel),
            other => Err(Error::InvalidArgument(format!("unknown input variant {other:?}"))),
        }
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputVariant::Frame => "frame",
            InputVariant::Onset => "onset",
            InputVariant::FrameOnset => "frame+onset",
            InputVariant::FrameOnsetVelocity => "frame+onset+velocity",
            InputVariant::LogMel => "logmel",
        })
    }
}

/// Channel-major C×T×K image for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct InputStack {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl InputStack {
    pub fn from_matrices(mats: &[&Matrix]) -> Result<Self> {
        let first = mats.first().ok_or_else(|| Error::Shape("no channels".into()))?;
        if mats.iter().any(|m| m.rows != first.rows || m.cols != first.cols) {
            return Err(Error::Shape("channels differ in shape".into()));
        }
        Ok(InputStack {
            channels: mats.len(),
            rows: first.rows,
            cols: first.cols,
            data: mats.iter().flat_map(|m| m.data.iter().copied()).collect(),
        })
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn from_mel(mel: &MelSpectrogram) -> Self {
        InputStack {
            channels: 1,
            rows: mel.values.rows,
            cols: mel.values.cols,
            data: mel.values.data.clone(),
        }
    }
}

/// Selects roll channels in the fixed (frame, onset, velocity) order.
pub fn stack_channels(rolls: &RollSet, variant: InputVariant) -> Result<InputStack> {
    let mats: Vec<&Matrix> = match variant {
        InputVariant::Frame => vec![&rolls.frame],
        InputVariant::Onset => vec![&rolls.onset],
        InputVariant::FrameOnset => vec![&rolls.frame, &rolls.onset],
        InputVariant::FrameOnsetVelocity => vec![&rolls.frame, &rolls.onset, &rolls.velocity],
        InputVariant::LogMel => {
            return Err(Error::InvalidArgument("logmel input is built from audio, not rolls".into()))
        }
    };
    InputStack::from_matrices(&mats)
}
