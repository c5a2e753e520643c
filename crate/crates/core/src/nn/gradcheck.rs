//! Finite-difference gradient verification in 64-bit precision.
//!
//! The scalar objective is `Σ output ⊙ R` for a fixed random projection `R`,
//! so the upstream gradient fed to `backward` is `R` itself. Sampled
//! coordinates of the parameters and of the input are perturbed by ±ε and
//! compared against the analytic gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::gru::BiGru;
use super::layers::Layer;
use super::loss::softmax_crossentropy;
use super::model::Model;
use super::tensor::{Mode, Tensor};
use crate::error::{Error, Result};

/// Anything with a forward/backward pair over `f64` tensors.
pub trait Differentiable {
    fn forward(&mut self, x: Tensor<f64>, record: bool) -> Result<Tensor<f64>>;
    /// Returns the input gradient (empty when the target does not produce one).
    fn backward(&mut self, grad: Tensor<f64>) -> Result<Tensor<f64>>;
    fn params(&mut self) -> Vec<&mut Tensor<f64>>;
}

/// Wraps a [`Layer`] and pins its mode.
pub struct LayerUnderTest<L> {
    pub layer: L,
    pub mode: Mode,
}

impl<L: Layer<f64>> Differentiable for LayerUnderTest<L> {
    fn forward(&mut self, x: Tensor<f64>, record: bool) -> Result<Tensor<f64>> {
        self.layer.forward(x, self.mode, record)
    }

    fn backward(&mut self, grad: Tensor<f64>) -> Result<Tensor<f64>> {
        self.layer.backward(grad)
    }

    fn params(&mut self) -> Vec<&mut Tensor<f64>> {
        self.layer.params_mut().into_iter().map(|(_, t)| t).collect()
    }
}

impl Differentiable for BiGru<f64> {
    fn forward(&mut self, x: Tensor<f64>, record: bool) -> Result<Tensor<f64>> {
        BiGru::forward(self, &x, record)
    }

    fn backward(&mut self, grad: Tensor<f64>) -> Result<Tensor<f64>> {
        BiGru::backward(self, &grad)
    }

    fn params(&mut self) -> Vec<&mut Tensor<f64>> {
        self.params_mut().into_iter().map(|(_, t)| t).collect()
    }
}

/// Whole network in eval mode (dropout off, batch norm on running stats);
/// only parameter coordinates are probed.
pub struct ModelUnderTest {
    pub model: Model<f64>,
}

impl Differentiable for ModelUnderTest {
    fn forward(&mut self, x: Tensor<f64>, record: bool) -> Result<Tensor<f64>> {
        self.model.forward(x, Mode::Eval, record)
    }

    fn backward(&mut self, grad: Tensor<f64>) -> Result<Tensor<f64>> {
        self.model.backward(grad)?;
        Ok(Tensor::zeros(&[0]))
    }

    fn params(&mut self) -> Vec<&mut Tensor<f64>> {
        self.model.params_mut()
    }
}

/// Mean softmax cross entropy with fixed labels; the output is the 1-element loss.
pub struct CrossEntropyUnderTest {
    pub labels: Vec<usize>,
    grad: Option<Tensor<f64>>,
}

impl CrossEntropyUnderTest {
    pub fn new(labels: Vec<usize>) -> Self {
        CrossEntropyUnderTest { labels, grad: None }
    }
}

impl Differentiable for CrossEntropyUnderTest {
    fn forward(&mut self, x: Tensor<f64>, record: bool) -> Result<Tensor<f64>> {
        let (loss, grad) = softmax_crossentropy(&x, &self.labels)?;
        self.grad = record.then_some(grad);
        Tensor::from_vec(&[1], vec![loss])
    }

    fn backward(&mut self, grad: Tensor<f64>) -> Result<Tensor<f64>> {
        let g = self
            .grad
            .take()
            .ok_or_else(|| Error::InvalidArgument("cross entropy: no recorded forward".into()))?;
        Ok(g.map(|v| v * grad.data()[0]))
    }

    fn params(&mut self) -> Vec<&mut Tensor<f64>> {
        Vec::new()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates sampled across parameters and input together.
    pub samples: usize,
    pub seed: u64,
    /// Whether to probe the input tensor as well as the parameters.
    pub check_input: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-3,
            samples: 100,
            seed: 0,
            check_input: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Relative error of each probed coordinate, in probe order.
    pub errors: Vec<f64>,
}

impl GradCheckReport {
    /// Fraction of probed coordinates with relative error below `tol`.
    pub fn fraction_within(&self, tol: f64) -> f64 {
        if self.errors.is_empty() {
            return 1.0;
        }
        self.errors.iter().filter(|&&e| e < tol).count() as f64 / self.errors.len() as f64
    }
}

/// `|a − n| / max(|a|, |n|)`, with exact agreement (including 0 vs 0) scoring 0.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn objective(out: &Tensor<f64>, proj: &[f64]) -> f64 {
    out.data().iter().zip(proj).map(|(a, b)| a * b).sum()
}

enum Coord {
    Param(usize, usize),
    Input(usize),
}

/// Compares analytic against central-difference gradients on sampled coordinates.
pub fn gradient_check<D: Differentiable>(target: &mut D, input: &Tensor<f64>, opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for p in target.params() {
        p.zero_grad();
        p.grad_mut();
    }
    let out = target.forward(input.clone(), true)?;
    let proj: Vec<f64> = (0..out.len()).map(|_| rng.sample(StandardNormal)).collect();
    let upstream = Tensor::from_vec(out.shape(), proj.clone())?;
    let input_grad = target.backward(upstream)?;
    let analytic_params: Vec<Vec<f64>> = target
        .params()
        .iter()
        .map(|p| p.grad().map(|g| g.to_vec()).unwrap_or_default())
        .collect();

    let mut coords: Vec<Coord> = Vec::new();
    let sizes: Vec<usize> = analytic_params.iter().map(|g| g.len()).collect();
    let total_params: usize = sizes.iter().sum();
    let probe_input = opts.check_input && input_grad.len() == input.len() && !input.is_empty();
    let pool = total_params + if probe_input { input.len() } else { 0 };
    if pool == 0 {
        return Err(Error::InvalidArgument("nothing to check".into()));
    }
    // Spread samples so every parameter tensor gets at least one probe.
    for (i, &n) in sizes.iter().enumerate() {
        if n > 0 && coords.len() < opts.samples {
            coords.push(Coord::Param(i, rng.gen_range(0..n)));
        }
    }
    if probe_input && coords.len() < opts.samples {
        coords.push(Coord::Input(rng.gen_range(0..input.len())));
    }
    while coords.len() < opts.samples {
        let mut k = rng.gen_range(0..pool);
        let mut picked = None;
        for (i, &n) in sizes.iter().enumerate() {
            if k < n {
                picked = Some(Coord::Param(i, k));
                break;
            }
            k -= n;
        }
        coords.push(picked.unwrap_or(Coord::Input(k)));
    }

    let mut worst = 0.0f64;
    let mut errors = Vec::with_capacity(coords.len());
    let mut x = input.clone();
    for coord in &coords {
        let (analytic, numeric) = match *coord {
            Coord::Param(i, j) => {
                let orig = target.params()[i].data()[j];
                target.params()[i].data_mut()[j] = orig + opts.eps;
                let plus = objective(&target.forward(x.clone(), false)?, &proj);
                target.params()[i].data_mut()[j] = orig - opts.eps;
                let minus = objective(&target.forward(x.clone(), false)?, &proj);
                target.params()[i].data_mut()[j] = orig;
                (analytic_params[i][j], (plus - minus) / (2.0 * opts.eps))
            }
            Coord::Input(j) => {
                let orig = x.data()[j];
                x.data_mut()[j] = orig + opts.eps;
                let plus = objective(&target.forward(x.clone(), false)?, &proj);
                x.data_mut()[j] = orig - opts.eps;
                let minus = objective(&target.forward(x.clone(), false)?, &proj);
                x.data_mut()[j] = orig;
                (input_grad.data()[j], (plus - minus) / (2.0 * opts.eps))
            }
        };
        if !analytic.is_finite() || !numeric.is_finite() {
            return Err(Error::NonFinite(format!("gradient check produced {analytic} vs {numeric}")));
        }
        let err = relative_error(analytic, numeric);
        worst = worst.max(err);
        errors.push(err);
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        checked: coords.len(),
        errors,
    })
}
