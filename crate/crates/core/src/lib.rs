//! Circular dilated convolutional networks for long-sequence classification.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense `(batch, channel, position)` arrays
//! * [`nn`]: convolution in circular, zero and causal padding modes, the
//!   residual block, and the position-averaged linear readout
//! * [`model`]: the CDIL, DIL, CNN and TCN stacks
//! * [`train`]: cross-entropy, Adam, the epoch loop and checkpoints
//! * [`data`]: seeded XOR and burst generators, noise shifting, CSV I/O
//! * [`experiment`]: the scaling and padding ablations built from the above

pub mod data;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{build_model, Init, Model, ModelConfig, Variant};
pub use tensor::{Matrix, Shape, Tensor3};
