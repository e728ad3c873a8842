pub mod error;
pub mod label;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use label::LabelMask;
