//! CNN and CRNN composer classifiers.
//!
//! Both share a stack of four conv blocks; each block is two
//! conv3×3→ReLU→BatchNorm layers, then 2×2 average pooling and dropout.
//! The CNN summarizes with global max pooling, the CRNN averages the
//! frequency axis, runs a biGRU over time and max-pools over time.
//! A two-layer fully connected head produces the class logits.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::gru::BiGru;
use super::layers::{AvgPool2x2, BatchNorm2d, Conv2d, Dropout, GlobalMaxPool, Layer, Linear, Relu, Visitor};
use super::tensor::{Mode, Scalar, Tensor};
use crate::error::{Error, Result};

/// Output channels of the eight convolutional layers.
pub const CONV_LADDER: [usize; 8] = [64, 64, 128, 128, 256, 256, 512, 512];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    Cnn,
    Crnn,
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Architecture::Cnn),
            "crnn" => Ok(Architecture::Crnn),
            other => Err(Error::InvalidArgument(format!("unknown architecture {other:?}"))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Cnn => "cnn",
            Architecture::Crnn => "crnn",
        })
    }
}

/// How the CRNN reduces its biGRU output sequence to one vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceSummary {
    TemporalMax,
    /// Final state of each direction.
    LastState,
}

impl FromStr for SequenceSummary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal_max" => Ok(SequenceSummary::TemporalMax),
            "last_state" => Ok(SequenceSummary::LastState),
            other => Err(Error::InvalidArgument(format!("unknown sequence summary {other:?}"))),
        }
    }
}

impl fmt::Display for SequenceSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SequenceSummary::TemporalMax => "temporal_max",
            SequenceSummary::LastState => "last_state",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub in_channels: usize,
    pub num_classes: usize,
    pub gru_hidden: usize,
    pub fc_hidden: usize,
    pub dropout_conv: f64,
    pub dropout_fc: f64,
    pub summary: SequenceSummary,
    /// Divides every entry of [`CONV_LADDER`]; 1 is the reference network.
    pub width_divisor: usize,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, in_channels: usize, num_classes: usize) -> Self {
        ModelConfig {
            architecture,
            in_channels,
            num_classes,
            gru_hidden: 256,
            fc_hidden: 512,
            dropout_conv: 0.2,
            dropout_fc: 0.5,
            summary: SequenceSummary::TemporalMax,
            width_divisor: 1,
        }
    }

    /// Narrower variant for CPU-scale experiments: conv widths, GRU and FC
    /// sizes all divided by `divisor`.
    pub fn scaled(mut self, divisor: usize) -> Self {
        self.width_divisor = divisor;
        self.gru_hidden = (256 / divisor).max(1);
        self.fc_hidden = (512 / divisor).max(1);
        self
    }

    pub fn conv_channels(&self) -> [usize; 8] {
        CONV_LADDER.map(|c| c / self.width_divisor)
    }

    /// Width of the vector fed to the fully connected head.
    pub fn embedding_width(&self) -> usize {
        match self.architecture {
            Architecture::Cnn => self.conv_channels()[7],
            Architecture::Crnn => 2 * self.gru_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1..=3).contains(&self.in_channels) {
            return bad(format!("in_channels must be 1, 2 or 3, got {}", self.in_channels));
        }
        if self.num_classes < 1 {
            return bad("num_classes must be positive".into());
        }
        if self.width_divisor == 0 || CONV_LADDER.iter().any(|c| c % self.width_divisor != 0) {
            return bad(format!("width divisor {} does not divide the conv ladder", self.width_divisor));
        }
        if self.gru_hidden == 0 || self.fc_hidden == 0 {
            return bad("hidden sizes must be positive".into());
        }
        for rate in [self.dropout_conv, self.dropout_fc] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("dropout rate {rate} outside [0, 1)"));
            }
        }
        Ok(())
    }
}

struct ConvLayer<F> {
    conv: Conv2d<F>,
    relu: Relu,
    bn: BatchNorm2d<F>,
}

impl<F: Scalar> ConvLayer<F> {
    fn forward(&mut self, x: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>> {
        let x = self.conv.forward(x, mode, record)?;
        let x = self.relu.forward(x, mode, record)?;
        self.bn.forward(x, mode, record)
    }

    fn backward(&mut self, g: Tensor<F>) -> Result<Tensor<F>> {
        let g = self.bn.backward(g)?;
        let g = Layer::<F>::backward(&mut self.relu, g)?;
        self.conv.backward(g)
    }
}

struct ConvBlock<F> {
    first: ConvLayer<F>,
    second: ConvLayer<F>,
    pool: AvgPool2x2,
    dropout: Dropout<F>,
}

impl<F: Scalar> ConvBlock<F> {
    fn forward(&mut self, x: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>> {
        let x = self.first.forward(x, mode, record)?;
        let x = self.second.forward(x, mode, record)?;
        let x = self.pool.forward(x, mode, record)?;
        self.dropout.forward(x, mode, record)
    }

    fn backward(&mut self, g: Tensor<F>) -> Result<Tensor<F>> {
        let g = self.dropout.backward(g)?;
        let g = Layer::<F>::backward(&mut self.pool, g)?;
        let g = self.second.backward(g)?;
        self.first.backward(g)
    }
}

/// Recurrent bridge of the CRNN with the caches its backward pass needs.
struct Recurrent<F> {
    gru: BiGru<F>,
    summary: SequenceSummary,
    conv_shape: Option<Vec<usize>>,
    argmax: Vec<usize>,
    seq_len: usize,
}

impl<F: Scalar> Recurrent<F> {
    /// B×C×T×F → mean over F → B×T×C → biGRU → B×2H.
    fn forward(&mut self, x: Tensor<F>, record: bool) -> Result<Tensor<F>> {
        let (b, c, t_len, fr) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let inv = F::from_f64(1.0 / fr as f64);
        let mut seq = Tensor::zeros(&[b, t_len, c]);
        for s in 0..b {
            for ch in 0..c {
                for t in 0..t_len {
                    let row = &x.data()[((s * c + ch) * t_len + t) * fr..][..fr];
                    seq.data_mut()[(s * t_len + t) * c + ch] = row.iter().copied().sum::<F>() * inv;
                }
            }
        }
        let hs = self.gru.forward(&seq, record)?;
        let width = hs.dim(2);
        let half = width / 2;
        let mut out = Tensor::zeros(&[b, width]);
        let mut argmax = vec![0; b * width];
        for s in 0..b {
            for j in 0..width {
                let idx = match self.summary {
                    SequenceSummary::TemporalMax => {
                        let mut best = 0;
                        for t in 1..t_len {
                            if hs.data()[(s * t_len + t) * width + j] > hs.data()[(s * t_len + best) * width + j] {
                                best = t;
                            }
                        }
                        best
                    }
                    SequenceSummary::LastState if j < half => t_len - 1,
                    SequenceSummary::LastState => 0,
                };
                argmax[s * width + j] = idx;
                out.data_mut()[s * width + j] = hs.data()[(s * t_len + idx) * width + j];
            }
        }
        if record {
            self.conv_shape = Some(x.shape().to_vec());
            self.argmax = argmax;
            self.seq_len = t_len;
        }
        Ok(out)
    }

    fn backward(&mut self, g: Tensor<F>) -> Result<Tensor<F>> {
        let shape = self
            .conv_shape
            .take()
            .ok_or_else(|| Error::InvalidArgument("crnn: backward called without a recorded forward".into()))?;
        let (b, c, t_len, fr) = (shape[0], shape[1], shape[2], shape[3]);
        let width = g.dim(1);
        let mut dhs = Tensor::zeros(&[b, self.seq_len, width]);
        for s in 0..b {
            for j in 0..width {
                let t = self.argmax[s * width + j];
                dhs.data_mut()[(s * t_len + t) * width + j] += g.data()[s * width + j];
            }
        }
        let dseq = self.gru.backward(&dhs)?;
        let inv = F::from_f64(1.0 / fr as f64);
        let mut dx = Tensor::zeros(&shape);
        for s in 0..b {
            for ch in 0..c {
                for t in 0..t_len {
                    let v = dseq.data()[(s * t_len + t) * c + ch] * inv;
                    dx.data_mut()[((s * c + ch) * t_len + t) * fr..][..fr]
                        .iter_mut()
                        .for_each(|d| *d = v);
                }
            }
        }
        Ok(dx)
    }
}

enum Summarizer<F> {
    GlobalMax(GlobalMaxPool),
    Recurrent(Box<Recurrent<F>>),
}

pub struct Model<F> {
    config: ModelConfig,
    blocks: Vec<ConvBlock<F>>,
    summarizer: Summarizer<F>,
    fc1: Linear<F>,
    fc_relu: Relu,
    fc_dropout: Dropout<F>,
    fc2: Linear<F>,
}

fn xavier<F: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<F> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| F::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::param(shape, data).expect("shape")
}

/// Square orthogonal matrix from Gram-Schmidt on Gaussian rows.
fn orthogonal<F: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Tensor<F> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for r in &rows {
                let dot: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
    }
    let data = rows.into_iter().flatten().map(F::from_f64).collect();
    Tensor::param(&[n, n], data).expect("shape")
}

fn zeros_param<F: Scalar>(n: usize) -> Tensor<F> {
    Tensor::param(&[n], vec![F::ZERO; n]).expect("shape")
}

impl<F: Scalar> Model<F> {
    /// Builds a freshly initialized network; `seed` fixes weights and dropout masks.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ladder = config.conv_channels();
        let mut blocks = Vec::with_capacity(4);
        let mut cin = config.in_channels;
        for (i, pair) in ladder.chunks(2).enumerate() {
            let mut layer = |cin: usize, cout: usize| -> Result<ConvLayer<F>> {
                let w = xavier(&mut rng, &[cout, cin, 3, 3], cin * 9, cout * 9);
                Ok(ConvLayer {
                    conv: Conv2d::new(w, zeros_param(cout))?,
                    relu: Relu::new(),
                    bn: BatchNorm2d::new(cout),
                })
            };
            let mut first = layer(cin, pair[0])?;
            let second = layer(pair[0], pair[1])?;
            first.conv.propagate = i > 0;
            cin = pair[1];
            blocks.push(ConvBlock {
                first,
                second,
                pool: AvgPool2x2::new(),
                dropout: Dropout::new(config.dropout_conv, ChaCha8Rng::seed_from_u64(rng.gen()))?,
            });
        }
        let summarizer = match config.architecture {
            Architecture::Cnn => Summarizer::GlobalMax(GlobalMaxPool::new()),
            Architecture::Crnn => {
                let (d, h) = (cin, config.gru_hidden);
                let mut gru = BiGru::zeros(d, h);
                for dir in [&mut gru.forward_dir, &mut gru.backward_dir] {
                    dir.w_z = xavier(&mut rng, &[d, h], d, h);
                    dir.w_r = xavier(&mut rng, &[d, h], d, h);
                    dir.w_h = xavier(&mut rng, &[d, h], d, h);
                    dir.u_z = orthogonal(&mut rng, h);
                    dir.u_r = orthogonal(&mut rng, h);
                    dir.u_h = orthogonal(&mut rng, h);
                }
                Summarizer::Recurrent(Box::new(Recurrent {
                    gru,
                    summary: config.summary,
                    conv_shape: None,
                    argmax: Vec::new(),
                    seq_len: 0,
                }))
            }
        };
        let e = config.embedding_width();
        let fc1 = Linear::new(xavier(&mut rng, &[e, config.fc_hidden], e, config.fc_hidden), zeros_param(config.fc_hidden))?;
        let fc2 = Linear::new(
            xavier(&mut rng, &[config.fc_hidden, config.num_classes], config.fc_hidden, config.num_classes),
            zeros_param(config.num_classes),
        )?;
        let fc_dropout = Dropout::new(config.dropout_fc, ChaCha8Rng::seed_from_u64(rng.gen()))?;
        Ok(Model {
            config,
            blocks,
            summarizer,
            fc1,
            fc_relu: Relu::new(),
            fc_dropout,
            fc2,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        x.expect_rank(4, "model input")?;
        if x.dim(1) != self.config.in_channels {
            return Err(Error::Shape(format!(
                "model expects {} input channels, got {:?}",
                self.config.in_channels,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Output of the last conv block, B×C×T'×K'.
    pub fn conv_features(&mut self, x: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>> {
        self.check_input(&x)?;
        let mut x = x;
        for block in &mut self.blocks {
            x = block.forward(x, mode, record)?;
        }
        Ok(x)
    }

    /// Pre-head embedding, B×embedding_width.
    pub fn embedding(&mut self, x: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>> {
        let x = self.conv_features(x, mode, record)?;
        self.summarize(x, mode, record)
    }

    fn summarize(&mut self, features: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>> {
        match &mut self.summarizer {
            Summarizer::GlobalMax(pool) => pool.forward(features, mode, record),
            Summarizer::Recurrent(rec) => rec.forward(features, record),
        }
    }

    /// Class logits, B×num_classes.
    pub fn forward(&mut self, x: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>> {
        let x = self.conv_features(x, mode, record)?;
        self.logits_from_features(x, mode, record)
    }

    /// The rest of [`Model::forward`] given the output of [`Model::conv_features`].
    pub fn logits_from_features(&mut self, features: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>> {
        let expected = self.config.conv_channels()[7];
        if features.shape().len() != 4 || features.dim(1) != expected {
            return Err(Error::Shape(format!(
                "conv features must be B×{expected}×T×K, got {:?}",
                features.shape()
            )));
        }
        let x = self.summarize(features, mode, record)?;
        let x = self.fc1.forward(x, mode, record)?;
        let x = self.fc_relu.forward(x, mode, record)?;
        let x = self.fc_dropout.forward(x, mode, record)?;
        self.fc2.forward(x, mode, record)
    }

    /// Eval-mode logits without recording activations.
    pub fn predict_logits(&mut self, x: Tensor<F>) -> Result<Tensor<F>> {
        self.forward(x, Mode::Eval, false)
    }

    /// Backpropagates logit gradients from the last recorded forward,
    /// accumulating into every parameter's gradient buffer. The gradient for
    /// the network input is not computed.
    pub fn backward(&mut self, grad_logits: Tensor<F>) -> Result<()> {
        let g = self.fc2.backward(grad_logits)?;
        let g = self.fc_dropout.backward(g)?;
        let g = Layer::<F>::backward(&mut self.fc_relu, g)?;
        let g = self.fc1.backward(g)?;
        let mut g = match &mut self.summarizer {
            Summarizer::GlobalMax(pool) => Layer::<F>::backward(pool, g)?,
            Summarizer::Recurrent(rec) => rec.backward(g)?,
        };
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(g)?;
        }
        Ok(())
    }

    /// Trainable parameters in a fixed order with stable names.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = Vec::new();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            for (name, layer) in [("conv1", &mut block.first), ("conv2", &mut block.second)] {
                out.push((format!("block{i}.{name}.weight"), &mut layer.conv.weight));
                out.push((format!("block{i}.{name}.bias"), &mut layer.conv.bias));
                out.push((format!("block{i}.{name}.bn.gamma"), &mut layer.bn.gamma));
                out.push((format!("block{i}.{name}.bn.beta"), &mut layer.bn.beta));
            }
        }
        if let Summarizer::Recurrent(rec) = &mut self.summarizer {
            out.extend(rec.gru.params_mut().into_iter().map(|(n, t)| (format!("gru.{n}"), t)));
        }
        out.push(("fc1.weight".into(), &mut self.fc1.weight));
        out.push(("fc1.bias".into(), &mut self.fc1.bias));
        out.push(("fc2.weight".into(), &mut self.fc2.weight));
        out.push(("fc2.bias".into(), &mut self.fc2.bias));
        out
    }

    pub fn visit_params(&mut self, f: &mut Visitor<'_, F>) {
        for (name, t) in self.named_params_mut() {
            f(&name, t);
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn visit_buffers(&mut self, f: &mut Visitor<'_, F>) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            for (name, layer) in [("conv1", &mut block.first), ("conv2", &mut block.second)] {
                f(&format!("block{i}.{name}.bn.running_mean"), &mut layer.bn.running_mean);
                f(&format!("block{i}.{name}.bn.running_var"), &mut layer.bn.running_var);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.named_params_mut().into_iter().map(|(_, t)| t).collect()
    }

    pub fn param_names(&mut self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |n, _| names.push(n.to_string()));
        names
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, t| n += t.len());
        n
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, t| t.zero_grad());
    }

    /// Re-seeds every dropout generator.
    pub fn reseed_dropout(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in &mut self.blocks {
            block.dropout.reseed(ChaCha8Rng::seed_from_u64(rng.gen()));
        }
        self.fc_dropout.reseed(ChaCha8Rng::seed_from_u64(rng.gen()));
    }

    /// Copies of all parameters and buffers, keyed by name.
    pub fn state(&mut self) -> Vec<(String, Tensor<F>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |n, t| out.push((n.to_string(), t.clone())));
        self.visit_buffers(&mut |n, t| out.push((n.to_string(), t.clone())));
        out
    }

    /// Same network in another precision, including gradients and running stats.
    pub fn cast<G: Scalar>(&mut self) -> Result<Model<G>> {
        let mut other = Model::<G>::new(self.config.clone(), 0)?;
        let state = self.state();
        other.load_state(state.iter().map(|(n, t)| (n.as_str(), t.cast())))?;
        Ok(other)
    }

    /// Overwrites named parameters and buffers; every name must be known and
    /// every shape must match.
    pub fn load_state<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, Tensor<F>)>) -> Result<()> {
        let mut pending: std::collections::BTreeMap<String, Tensor<F>> =
            entries.into_iter().map(|(n, t)| (n.to_string(), t)).collect();
        let mut err = None;
        let mut fill = |name: &str, t: &mut Tensor<F>| {
            if err.is_some() {
                return;
            }
            match pending.remove(name) {
                Some(src) if src.shape() == t.shape() => {
                    t.data_mut().copy_from_slice(src.data());
                }
                Some(src) => {
                    err = Some(Error::Shape(format!(
                        "{name}: stored {:?}, model expects {:?}",
                        src.shape(),
                        t.shape()
                    )))
                }
                None => err = Some(Error::Checkpoint(format!("missing tensor {name}"))),
            }
        };
        self.visit_params(&mut fill);
        self.visit_buffers(&mut fill);
        if let Some(e) = err {
            return Err(e);
        }
        if let Some(name) = pending.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
        }
        Ok(())
    }
}

/// Output size of the conv stack for an H×W input: four floor halvings.
pub fn conv_output_size(h: usize, w: usize) -> (usize, usize) {
    (0..4).fold((h, w), |(h, w), _| (h / 2, w / 2))
}
