//! From-scratch differentiable layers, the CNN/CRNN classifiers, loss and Adam.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod loss;
pub mod model;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use gru::BiGru;
pub use layers::{avg_pool2x2, conv2d, global_max_pool, linear, Layer};
pub use loss::{argmax, softmax, softmax_crossentropy};
pub use model::{conv_output_size, Architecture, Model, ModelConfig, SequenceSummary, CONV_LADDER};
pub use tensor::{Mode, Scalar, Tensor};
