use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::InputStack;
use crate::nn::Tensor;

/// One clip ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub source_id: String,
    pub label: usize,
    pub input: InputStack,
}

/// Shuffled index batches for one epoch; the order depends only on
/// `(seed, epoch)` and the last batch may be short.
pub fn batch_indices(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Stacks samples into a B×C×T×K tensor and a label vector.
pub fn collate(samples: &[&Sample]) -> Result<(Tensor<f32>, Vec<usize>)> {
    let first = samples.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
    let (c, t, k) = (first.input.channels, first.input.rows, first.input.cols);
    let mut data = Vec::with_capacity(samples.len() * c * t * k);
    for s in samples {
        if (s.input.channels, s.input.rows, s.input.cols) != (c, t, k) {
            return Err(Error::Shape(format!(
                "sample {} is {}x{}x{}, batch is {c}x{t}x{k}",
                s.source_id, s.input.channels, s.input.rows, s.input.cols
            )));
        }
        data.extend_from_slice(&s.input.data);
    }
    let labels = samples.iter().map(|s| s.label).collect();
    Ok((Tensor::from_vec(&[samples.len(), c, t, k], data)?, labels))
}
