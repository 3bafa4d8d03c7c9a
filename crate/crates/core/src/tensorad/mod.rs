//! A small reverse-mode automatic differentiation engine over dense NCHW
//! tensors, with the operations needed to train the encoder-decoder networks
//! in 2D: convolution, transposed convolution, max pooling, batch norm, ReLU,
//! channel concatenation and the segmentation losses.
//!
//! Values are recorded on a [`Tape`]; [`Tape::backward`] replays it in reverse
//! and returns [`Gradients`] for every leaf created with [`Tape::leaf`].
//! Tensors are stored and loaded in the TSR1 binary format
//! ([`Tensor::save`], [`Tensor::load`]).

mod init;
mod kernels;
mod tape;
mod tensor;

pub use init::glorot_uniform;
pub use tape::{BnMode, Gradients, RunningStats, Tape, Var, BN_EPSILON, BN_MOMENTUM};
pub use tensor::{Scalar, Tensor};
