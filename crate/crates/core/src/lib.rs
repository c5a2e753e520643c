pub mod error;
pub mod io;
pub mod nn;

pub use error::{Error, Result};
pub mod features;
pub mod midi;
pub mod dataset;
pub mod eval;
pub mod pipeline;
pub mod synth;
