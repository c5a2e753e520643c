//! Finite-difference check of every layer and of a small CRNN.
//! Usage: cargo run --release --example gradient_check [eps]

use composer_id::nn::gradcheck::{
    gradient_check, CrossEntropyUnderTest, GradCheckOptions, LayerUnderTest, ModelUnderTest,
};
use composer_id::nn::layers::{AvgPool2x2, BatchNorm2d, Conv2d, GlobalMaxPool, Linear};
use composer_id::nn::{Architecture, BiGru, Mode, Model, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], param: bool) -> Tensor<f64> {
    let data = (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if param {
        Tensor::param(shape, data).unwrap()
    } else {
        Tensor::from_vec(shape, data).unwrap()
    }
}

fn main() -> composer_id::Result<()> {
    let eps: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1e-5);
    let opts = GradCheckOptions { eps, samples: 150, ..GradCheckOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let show = |name: &str, r: composer_id::nn::gradcheck::GradCheckReport| {
        println!("{name:<22} max rel err {:.2e} over {} coordinates", r.max_relative_error, r.checked)
    };

    let conv = Conv2d::new(random(&mut rng, &[4, 2, 3, 3], true), random(&mut rng, &[4], true))?;
    let x = random(&mut rng, &[2, 2, 6, 5], false);
    show("conv2d", gradient_check(&mut LayerUnderTest { layer: conv, mode: Mode::Train }, &x, opts)?);

    let mut bn = BatchNorm2d::<f64>::new(2);
    bn.gamma = random(&mut rng, &[2], true);
    bn.beta = random(&mut rng, &[2], true);
    show("batch_norm2d (train)", gradient_check(&mut LayerUnderTest { layer: bn, mode: Mode::Train }, &x, opts)?);
    show("avg_pool2x2", gradient_check(&mut LayerUnderTest { layer: AvgPool2x2::new(), mode: Mode::Train }, &x, opts)?);
    show("global_max_pool", gradient_check(&mut LayerUnderTest { layer: GlobalMaxPool::new(), mode: Mode::Train }, &x, opts)?);

    let lin = Linear::new(random(&mut rng, &[5, 3], true), random(&mut rng, &[3], true))?;
    show("linear", gradient_check(&mut LayerUnderTest { layer: lin, mode: Mode::Train }, &random(&mut rng, &[4, 5], false), opts)?);

    let mut gru = BiGru::<f64>::zeros(3, 4);
    for (_, t) in gru.params_mut() {
        let shape = t.shape().to_vec();
        *t = random(&mut rng, &shape, true).map(|v| 0.5 * v);
        *t = Tensor::param(&shape, t.data().to_vec())?;
    }
    show("bigru", gradient_check(&mut gru, &random(&mut rng, &[2, 5, 3], false), opts)?);

    let labels = vec![0, 2, 1, 2];
    show("softmax_crossentropy", gradient_check(&mut CrossEntropyUnderTest::new(labels), &random(&mut rng, &[4, 3], false), opts)?);

    let config = ModelConfig { gru_hidden: 4, fc_hidden: 8, ..ModelConfig::new(Architecture::Crnn, 2, 3).scaled(16) };
    let model = Model::<f64>::new(config, 1)?;
    let x = random(&mut rng, &[2, 2, 48, 16], false);
    // whole networks may straddle a ReLU kink, so look at the spread too
    let r = gradient_check(&mut ModelUnderTest { model }, &x, GradCheckOptions { check_input: false, ..opts })?;
    println!("{:<22} {:.0}% of {} coordinates within 1e-5", "crnn (eval mode)", 100.0 * r.fraction_within(1e-5), r.checked);
    Ok(())
}
