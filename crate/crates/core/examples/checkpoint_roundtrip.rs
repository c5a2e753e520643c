//! Trains a tiny CNN for a few steps, saves a checkpoint with optimizer
//! state, reloads it and compares predictions.
//! Usage: cargo run --release --example checkpoint_roundtrip [path]

use composer_id::nn::{adam_step, checkpoint, softmax_crossentropy, AdamState, Architecture, Mode, Model, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("demo.cckp").display().to_string());
    let config = ModelConfig::new(Architecture::Cnn, 3, 4).scaled(16);
    let mut model = Model::<f32>::new(config.clone(), 3)?;
    let mut opt = AdamState::<f32>::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x: Vec<f32> = (0..4 * 3 * 64 * 32).map(|_| rng.gen()).collect();
    let x = Tensor::from_vec(&[4, 3, 64, 32], x)?;
    for step in 0..5 {
        model.zero_grad();
        let logits = model.forward(x.clone(), Mode::Train, true)?;
        let (loss, grad) = softmax_crossentropy(&logits, &[0, 1, 2, 3])?;
        model.backward(grad)?;
        adam_step(&mut model.params_mut(), &mut opt)?;
        println!("step {step}: loss {loss:.4}");
    }
    checkpoint::save(path.as_ref(), &mut model, Some(&opt))?;
    let (mut loaded, loaded_opt) = checkpoint::load(path.as_ref(), &config)?;
    let a = model.predict_logits(x.clone())?;
    let b = loaded.predict_logits(x)?;
    println!(
        "{} bytes at {path}; {} parameters; optimizer step {}; logits identical: {}",
        std::fs::metadata(&path)?.len(),
        loaded.param_count(),
        loaded_opt.map(|o| o.step).unwrap_or(0),
        a.data() == b.data()
    );
    Ok(())
}
