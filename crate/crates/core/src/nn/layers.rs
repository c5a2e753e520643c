//! Differentiable layers with hand-written backward passes.
//!
//! Every layer caches what its backward pass needs during `forward` when
//! `record` is set, and accumulates parameter gradients into the gradient
//! buffers of its parameter tensors.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Mode, Scalar, Tensor};
use crate::error::{Error, Result};

/// Upper bound on im2col buffer elements per chunk.
const COLS_BUDGET: usize = 1 << 20;

/// Callback used to enumerate named tensors (parameters or buffers).
pub type Visitor<'a, F> = dyn FnMut(&str, &mut Tensor<F>) + 'a;

pub trait Layer<F: Scalar> {
    fn forward(&mut self, x: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>>;
    fn backward(&mut self, grad: Tensor<F>) -> Result<Tensor<F>>;
    fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<F>)> {
        Vec::new()
    }
}

fn missing_cache(layer: &str) -> Error {
    Error::InvalidArgument(format!("{layer}: backward called without a recorded forward"))
}

/// 3×3 convolution, stride 1, zero padding 1 (cross-correlation).
pub struct Conv2d<F> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
    /// When false, backward skips the input gradient (first layer of a network).
    pub propagate: bool,
    input: Option<Tensor<F>>,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new(weight: Tensor<F>, bias: Tensor<F>) -> Result<Self> {
        weight.expect_rank(4, "conv2d weight")?;
        if weight.dim(2) != 3 || weight.dim(3) != 3 {
            return Err(Error::Shape(format!(
                "conv2d kernel must be 3x3, got {:?}",
                weight.shape()
            )));
        }
        if bias.shape() != [weight.dim(0)] {
            return Err(Error::Shape(format!(
                "conv2d bias {:?} for {} output channels",
                bias.shape(),
                weight.dim(0)
            )));
        }
        Ok(Conv2d {
            weight,
            bias,
            propagate: true,
            input: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim(0)
    }
}

fn chunk_rows(cin: usize, h: usize, w: usize) -> usize {
    (COLS_BUDGET / (cin * 9 * w).max(1)).clamp(1, h.max(1))
}

/// Fill `cols` ((cin·9) × (rows·w)) for output rows `r0..r0+rows`.
fn im2col<F: Scalar>(x: &[F], cin: usize, h: usize, w: usize, r0: usize, rows: usize, cols: &mut [F]) {
    let n = rows * w;
    for ci in 0..cin {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let dst = &mut cols[(ci * 9 + ky * 3 + kx) * n..][..n];
                for r in 0..rows {
                    let out_row = &mut dst[r * w..(r + 1) * w];
                    let iy = (r0 + r) as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        out_row.iter_mut().for_each(|v| *v = F::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    match kx {
                        0 => {
                            out_row[0] = F::ZERO;
                            out_row[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => out_row.copy_from_slice(src),
                        _ => {
                            out_row[..w - 1].copy_from_slice(&src[1..]);
                            out_row[w - 1] = F::ZERO;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add `cols` back onto the input gradient.
fn col2im<F: Scalar>(cols: &[F], cin: usize, h: usize, w: usize, r0: usize, rows: usize, dx: &mut [F]) {
    let n = rows * w;
    for ci in 0..cin {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let src = &cols[(ci * 9 + ky * 3 + kx) * n..][..n];
                for r in 0..rows {
                    let iy = (r0 + r) as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let row = &src[r * w..(r + 1) * w];
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&row[1..]).for_each(|(d, &s)| *d += s),
                        1 => dst.iter_mut().zip(row).for_each(|(d, &s)| *d += s),
                        _ => dst[1..].iter_mut().zip(&row[..w - 1]).for_each(|(d, &s)| *d += s),
                    }
                }
            }
        }
    }
}

/// Functional 3×3 same-padded convolution: `x` B×Cin×H×W, `weight` Cout×Cin×3×3.
pub fn conv2d<F: Scalar>(x: &Tensor<F>, weight: &Tensor<F>, bias: &Tensor<F>) -> Result<Tensor<F>> {
    x.expect_rank(4, "conv2d input")?;
    let (b, cin, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    if weight.dim(1) != cin {
        return Err(Error::Shape(format!(
            "conv2d expects {} input channels, got {cin}",
            weight.dim(1)
        )));
    }
    let cout = weight.dim(0);
    let k = cin * 9;
    let hw = h * w;
    let mut out = Tensor::zeros(&[b, cout, h, w]);
    if hw == 0 {
        return Ok(out);
    }
    let rows_per = chunk_rows(cin, h, w);
    let mut cols = vec![F::ZERO; k * rows_per * w];
    for s in 0..b {
        let xs = &x.data()[s * cin * hw..(s + 1) * cin * hw];
        let ys = &mut out.data_mut()[s * cout * hw..(s + 1) * cout * hw];
        let mut r0 = 0;
        while r0 < h {
            let rows = rows_per.min(h - r0);
            let n = rows * w;
            im2col(xs, cin, h, w, r0, rows, &mut cols[..k * n]);
            F::gemm(
                cout,
                k,
                n,
                F::ONE,
                weight.data(),
                k as isize,
                1,
                &cols[..k * n],
                n as isize,
                1,
                F::ZERO,
                &mut ys[r0 * w..],
                hw as isize,
                1,
            );
            r0 += rows;
        }
        for (c, &bc) in bias.data().iter().enumerate() {
            ys[c * hw..(c + 1) * hw].iter_mut().for_each(|v| *v += bc);
        }
    }
    Ok(out)
}

impl<F: Scalar> Layer<F> for Conv2d<F> {
    fn forward(&mut self, x: Tensor<F>, _mode: Mode, record: bool) -> Result<Tensor<F>> {
        let y = conv2d(&x, &self.weight, &self.bias)?;
        self.input = record.then_some(x);
        Ok(y)
    }

    fn backward(&mut self, grad: Tensor<F>) -> Result<Tensor<F>> {
        let x = self.input.take().ok_or_else(|| missing_cache("conv2d"))?;
        let (b, cin, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let cout = self.out_channels();
        if grad.shape() != [b, cout, h, w] {
            return Err(Error::Shape(format!("conv2d grad {:?}", grad.shape())));
        }
        let k = cin * 9;
        let hw = h * w;
        let mut dx = Tensor::zeros(if self.propagate { x.shape() } else { &[0] });
        let rows_per = chunk_rows(cin, h, w);
        let mut cols = vec![F::ZERO; k * rows_per * w];
        let mut dcols = vec![F::ZERO; if self.propagate { k * rows_per * w } else { 0 }];
        let (wdata, wgrad) = self.weight.data_and_grad_mut();
        let bgrad = self.bias.grad_mut();
        for s in 0..b {
            let xs = &x.data()[s * cin * hw..(s + 1) * cin * hw];
            let gs = &grad.data()[s * cout * hw..(s + 1) * cout * hw];
            for (c, bg) in bgrad.iter_mut().enumerate() {
                *bg += gs[c * hw..(c + 1) * hw].iter().copied().sum::<F>();
            }
            let mut r0 = 0;
            while r0 < h {
                let rows = rows_per.min(h - r0);
                let n = rows * w;
                im2col(xs, cin, h, w, r0, rows, &mut cols[..k * n]);
                // dW += dY · colsᵀ
                F::gemm(
                    cout,
                    n,
                    k,
                    F::ONE,
                    &gs[r0 * w..],
                    hw as isize,
                    1,
                    &cols[..k * n],
                    1,
                    n as isize,
                    F::ONE,
                    wgrad,
                    k as isize,
                    1,
                );
                if self.propagate {
                    // dcols = Wᵀ · dY
                    F::gemm(
                        k,
                        cout,
                        n,
                        F::ONE,
                        wdata,
                        1,
                        k as isize,
                        &gs[r0 * w..],
                        hw as isize,
                        1,
                        F::ZERO,
                        &mut dcols[..k * n],
                        n as isize,
                        1,
                    );
                    let dxs = &mut dx.data_mut()[s * cin * hw..(s + 1) * cin * hw];
                    col2im(&dcols[..k * n], cin, h, w, r0, rows, dxs);
                }
                r0 += rows;
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<F>)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}

pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: Vec::new() }
    }
}

impl Default for Relu {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Layer<F> for Relu {
    fn forward(&mut self, mut x: Tensor<F>, _mode: Mode, record: bool) -> Result<Tensor<F>> {
        // NaN passes through so a corrupt input still surfaces as a non-finite loss
        x.data_mut().iter_mut().for_each(|v| {
            if *v < F::ZERO {
                *v = F::ZERO
            }
        });
        if record {
            self.mask = x.data().iter().map(|&v| v > F::ZERO).collect();
        }
        Ok(x)
    }

    fn backward(&mut self, mut grad: Tensor<F>) -> Result<Tensor<F>> {
        if self.mask.len() != grad.len() {
            return Err(missing_cache("relu"));
        }
        grad.data_mut()
            .iter_mut()
            .zip(&self.mask)
            .for_each(|(g, &keep)| {
                if !keep {
                    *g = F::ZERO
                }
            });
        self.mask.clear();
        Ok(grad)
    }
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over (B, H, W).
pub struct BatchNorm2d<F> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    cache: Option<BnCache<F>>,
}

struct BnCache<F> {
    xhat: Tensor<F>,
    inv_std: Vec<F>,
    train: bool,
}

impl<F: Scalar> BatchNorm2d<F> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::param(&[channels], vec![F::ONE; channels]).expect("shape"),
            beta: Tensor::param(&[channels], vec![F::ZERO; channels]).expect("shape"),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], F::ONE),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

impl<F: Scalar> Layer<F> for BatchNorm2d<F> {
    fn forward(&mut self, mut x: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>> {
        x.expect_rank(4, "batch_norm2d")?;
        let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batch_norm2d has {} channels, input {:?}",
                self.channels(),
                x.shape()
            )));
        }
        let hw = h * w;
        let count = b * hw;
        let eps = F::from_f64(BN_EPS);
        let mut inv_std = vec![F::ZERO; c];
        let mut shift = vec![F::ZERO; c];
        let train = mode == Mode::Train;
        if train {
            if count == 0 {
                return Err(Error::Shape("batch_norm2d on an empty batch".into()));
            }
            let momentum = F::from_f64(BN_MOMENTUM);
            for ch in 0..c {
                let mut sum = 0.0f64;
                for s in 0..b {
                    sum += x.data()[(s * c + ch) * hw..][..hw].iter().map(|v| v.to_f64()).sum::<f64>();
                }
                let mean = sum / count as f64;
                let mut sq = 0.0f64;
                for s in 0..b {
                    sq += x.data()[(s * c + ch) * hw..][..hw]
                        .iter()
                        .map(|v| {
                            let d = v.to_f64() - mean;
                            d * d
                        })
                        .sum::<f64>();
                }
                let var = sq / count as f64;
                let unbiased = if count > 1 { sq / (count - 1) as f64 } else { var };
                let rm = &mut self.running_mean.data_mut()[ch];
                *rm = momentum * *rm + (F::ONE - momentum) * F::from_f64(mean);
                let rv = &mut self.running_var.data_mut()[ch];
                *rv = momentum * *rv + (F::ONE - momentum) * F::from_f64(unbiased);
                inv_std[ch] = F::from_f64(1.0 / (var + BN_EPS).sqrt());
                shift[ch] = F::from_f64(mean);
            }
        } else {
            for ch in 0..c {
                inv_std[ch] = F::ONE / (self.running_var.data()[ch] + eps).sqrt();
                shift[ch] = self.running_mean.data()[ch];
            }
        }
        let xhat = if record { Some(Tensor::zeros(x.shape())) } else { None };
        let mut xhat = xhat;
        for s in 0..b {
            for ch in 0..c {
                let (g, bt, m, is) = (self.gamma.data()[ch], self.beta.data()[ch], shift[ch], inv_std[ch]);
                let off = (s * c + ch) * hw;
                let plane = &mut x.data_mut()[off..off + hw];
                match xhat.as_mut() {
                    Some(xh) => {
                        let xh = &mut xh.data_mut()[off..off + hw];
                        for (v, n) in plane.iter_mut().zip(xh) {
                            *n = (*v - m) * is;
                            *v = *n * g + bt;
                        }
                    }
                    None => plane.iter_mut().for_each(|v| *v = (*v - m) * is * g + bt),
                }
            }
        }
        self.cache = xhat.map(|xhat| BnCache { xhat, inv_std, train });
        Ok(x)
    }

    fn backward(&mut self, mut grad: Tensor<F>) -> Result<Tensor<F>> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("batch_norm2d"))?;
        if grad.shape() != cache.xhat.shape() {
            return Err(Error::Shape(format!("batch_norm2d grad {:?}", grad.shape())));
        }
        let (b, c) = (grad.dim(0), grad.dim(1));
        let hw = grad.dim(2) * grad.dim(3);
        let count = F::from_f64((b * hw) as f64);
        let gamma = self.gamma.data().to_vec();
        let gg = self.gamma.grad_mut();
        let mut sum_dy = vec![F::ZERO; c];
        let mut sum_dy_xhat = vec![F::ZERO; c];
        for s in 0..b {
            for ch in 0..c {
                let off = (s * c + ch) * hw;
                let dy = &grad.data()[off..off + hw];
                let xh = &cache.xhat.data()[off..off + hw];
                sum_dy[ch] += dy.iter().copied().sum::<F>();
                sum_dy_xhat[ch] += dy.iter().zip(xh).map(|(&a, &b)| a * b).sum::<F>();
            }
        }
        for ch in 0..c {
            gg[ch] += sum_dy_xhat[ch];
        }
        let bg = self.beta.grad_mut();
        for ch in 0..c {
            bg[ch] += sum_dy[ch];
        }
        for s in 0..b {
            for ch in 0..c {
                let off = (s * c + ch) * hw;
                let scale = gamma[ch] * cache.inv_std[ch];
                let dy = &mut grad.data_mut()[off..off + hw];
                if cache.train {
                    let mean_dy = sum_dy[ch] / count;
                    let mean_dy_xhat = sum_dy_xhat[ch] / count;
                    let xh = &cache.xhat.data()[off..off + hw];
                    for (g, &n) in dy.iter_mut().zip(xh) {
                        *g = scale * (*g - mean_dy - n * mean_dy_xhat);
                    }
                } else {
                    dy.iter_mut().for_each(|g| *g = *g * scale);
                }
            }
        }
        Ok(grad)
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<F>)> {
        vec![("gamma", &mut self.gamma), ("beta", &mut self.beta)]
    }
}

/// 2×2 average pooling, stride 2, trailing odd row/column dropped.
#[derive(Default)]
pub struct AvgPool2x2 {
    input_shape: Option<Vec<usize>>,
}

impl AvgPool2x2 {
    pub fn new() -> Self {
        Self::default()
    }
}

pub fn avg_pool2x2<F: Scalar>(x: &Tensor<F>) -> Result<Tensor<F>> {
    x.expect_rank(4, "avg_pool2x2")?;
    let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!("avg_pool2x2 needs H, W >= 2, got {:?}", x.shape())));
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = F::from_f64(0.25);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    for (plane, dst) in x.data().chunks(h * w).zip(out.data_mut().chunks_mut(oh * ow)) {
        for oy in 0..oh {
            let top = &plane[2 * oy * w..];
            let bottom = &plane[(2 * oy + 1) * w..];
            for ox in 0..ow {
                dst[oy * ow + ox] =
                    (top[2 * ox] + top[2 * ox + 1] + bottom[2 * ox] + bottom[2 * ox + 1]) * quarter;
            }
        }
    }
    Ok(out)
}

impl<F: Scalar> Layer<F> for AvgPool2x2 {
    fn forward(&mut self, x: Tensor<F>, _mode: Mode, record: bool) -> Result<Tensor<F>> {
        let y = avg_pool2x2(&x)?;
        self.input_shape = record.then(|| x.shape().to_vec());
        Ok(y)
    }

    fn backward(&mut self, grad: Tensor<F>) -> Result<Tensor<F>> {
        let shape = self.input_shape.take().ok_or_else(|| missing_cache("avg_pool2x2"))?;
        let (h, w) = (shape[2], shape[3]);
        let (oh, ow) = (h / 2, w / 2);
        if grad.shape() != [shape[0], shape[1], oh, ow] {
            return Err(Error::Shape(format!("avg_pool2x2 grad {:?}", grad.shape())));
        }
        let quarter = F::from_f64(0.25);
        let mut dx = Tensor::zeros(&shape);
        for (dplane, g) in dx.data_mut().chunks_mut(h * w).zip(grad.data().chunks(oh * ow)) {
            for oy in 0..oh {
                for ox in 0..ow {
                    let v = g[oy * ow + ox] * quarter;
                    dplane[2 * oy * w + 2 * ox] = v;
                    dplane[2 * oy * w + 2 * ox + 1] = v;
                    dplane[(2 * oy + 1) * w + 2 * ox] = v;
                    dplane[(2 * oy + 1) * w + 2 * ox + 1] = v;
                }
            }
        }
        Ok(dx)
    }
}

/// Per-channel max over the spatial axes: B×C×H×W → B×C.
#[derive(Default)]
pub struct GlobalMaxPool {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl GlobalMaxPool {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Returns the pooled values and the first row-major argmax of each plane.
pub fn global_max_pool<F: Scalar>(x: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>)> {
    x.expect_rank(4, "global_max_pool")?;
    let (b, c, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    if h == 0 || w == 0 {
        return Err(Error::Shape("global_max_pool on an empty map".into()));
    }
    let mut out = Tensor::zeros(&[b, c]);
    let mut arg = Vec::with_capacity(b * c);
    for (i, plane) in x.data().chunks(h * w).enumerate() {
        let mut best = 0;
        for (j, &v) in plane.iter().enumerate() {
            if v > plane[best] {
                best = j;
            }
        }
        out.data_mut()[i] = plane[best];
        arg.push(best);
    }
    Ok((out, arg))
}

impl<F: Scalar> Layer<F> for GlobalMaxPool {
    fn forward(&mut self, x: Tensor<F>, _mode: Mode, record: bool) -> Result<Tensor<F>> {
        let (y, arg) = global_max_pool(&x)?;
        self.cache = record.then(|| (x.shape().to_vec(), arg));
        Ok(y)
    }

    fn backward(&mut self, grad: Tensor<F>) -> Result<Tensor<F>> {
        let (shape, arg) = self.cache.take().ok_or_else(|| missing_cache("global_max_pool"))?;
        if grad.shape() != [shape[0], shape[1]] {
            return Err(Error::Shape(format!("global_max_pool grad {:?}", grad.shape())));
        }
        let hw = shape[2] * shape[3];
        let mut dx = Tensor::zeros(&shape);
        for (i, &a) in arg.iter().enumerate() {
            dx.data_mut()[i * hw + a] = grad.data()[i];
        }
        Ok(dx)
    }
}

/// Affine map `x·W + b` with `W` of shape D×E.
pub struct Linear<F> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
    input: Option<Tensor<F>>,
}

impl<F: Scalar> Linear<F> {
    pub fn new(weight: Tensor<F>, bias: Tensor<F>) -> Result<Self> {
        weight.expect_rank(2, "linear weight")?;
        if bias.shape() != [weight.dim(1)] {
            return Err(Error::Shape(format!(
                "linear bias {:?} for weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        Ok(Linear {
            weight,
            bias,
            input: None,
        })
    }
}

pub fn linear<F: Scalar>(x: &Tensor<F>, weight: &Tensor<F>, bias: &Tensor<F>) -> Result<Tensor<F>> {
    x.expect_rank(2, "linear input")?;
    let (b, d) = (x.dim(0), x.dim(1));
    let e = weight.dim(1);
    if weight.dim(0) != d {
        return Err(Error::Shape(format!(
            "linear expects width {}, got {d}",
            weight.dim(0)
        )));
    }
    let mut y = Tensor::zeros(&[b, e]);
    for row in y.data_mut().chunks_mut(e) {
        row.copy_from_slice(bias.data());
    }
    F::gemm(b, d, e, F::ONE, x.data(), d as isize, 1, weight.data(), e as isize, 1, F::ONE, y.data_mut(), e as isize, 1);
    Ok(y)
}

impl<F: Scalar> Layer<F> for Linear<F> {
    fn forward(&mut self, x: Tensor<F>, _mode: Mode, record: bool) -> Result<Tensor<F>> {
        let y = linear(&x, &self.weight, &self.bias)?;
        self.input = record.then_some(x);
        Ok(y)
    }

    fn backward(&mut self, grad: Tensor<F>) -> Result<Tensor<F>> {
        let x = self.input.take().ok_or_else(|| missing_cache("linear"))?;
        let (b, d) = (x.dim(0), x.dim(1));
        let e = self.weight.dim(1);
        if grad.shape() != [b, e] {
            return Err(Error::Shape(format!("linear grad {:?}", grad.shape())));
        }
        let (w, wg) = self.weight.data_and_grad_mut();
        // dW += xᵀ · dy
        F::gemm(d, b, e, F::ONE, x.data(), 1, d as isize, grad.data(), e as isize, 1, F::ONE, wg, e as isize, 1);
        let mut dx = Tensor::zeros(&[b, d]);
        // dx = dy · Wᵀ
        F::gemm(b, e, d, F::ONE, grad.data(), e as isize, 1, w, 1, e as isize, F::ZERO, dx.data_mut(), d as isize, 1);
        let bg = self.bias.grad_mut();
        for row in grad.data().chunks(e) {
            bg.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor<F>)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}

/// Inverted dropout: kept units scaled by 1/(1−rate) in training, identity in eval.
pub struct Dropout<F> {
    rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<F>>,
}

impl<F: Scalar> Dropout<F> {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout {
            rate,
            rng,
            mask: None,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn reseed(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }
}

impl<F: Scalar> Layer<F> for Dropout<F> {
    fn forward(&mut self, mut x: Tensor<F>, mode: Mode, record: bool) -> Result<Tensor<F>> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x);
        }
        let scale = F::from_f64(1.0 / (1.0 - self.rate));
        let rate = self.rate;
        let rng = &mut self.rng;
        let mask: Vec<F> = (0..x.len())
            .map(|_| if rng.gen::<f64>() < rate { F::ZERO } else { scale })
            .collect();
        x.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| *v = *v * m);
        self.mask = record.then_some(mask);
        Ok(x)
    }

    fn backward(&mut self, mut grad: Tensor<F>) -> Result<Tensor<F>> {
        if let Some(mask) = self.mask.take() {
            if mask.len() != grad.len() {
                return Err(Error::Shape(format!("dropout grad {:?}", grad.shape())));
            }
            grad.data_mut().iter_mut().zip(&mask).for_each(|(g, &m)| *g = *g * m);
        }
        Ok(grad)
    }
}
