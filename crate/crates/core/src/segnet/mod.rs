//! Trainable 2D networks built from [`crate::cyclegraph`] graphs.
//!
//! Every `ConvBlock` holds two 3×3 convolutions with bias, each followed by
//! batch norm and ReLU; `Up` is a 2×2 stride-2 transposed convolution and the
//! `Head` a 1×1 convolution. The loss is soft Dice over the foreground
//! classes plus softmax cross-entropy, optimised with Adam at a constant
//! learning rate. Validation losses use batch statistics.

mod checkpoint;
mod model;
mod optim;
mod train;

pub use checkpoint::{
    BatchNormEntry, CheckpointManifest, ParameterEntry, CHECKPOINT_FORMAT, CHECKPOINT_MANIFEST, CHECKPOINT_VERSION,
};
pub use model::{BatchNormState, Forward, Model, Parameter};
pub use optim::{dice_ce_loss, dice_ce_loss_value, Adam, AdamConfig, DICE_SMOOTHING};
pub use train::{
    batch, evaluate_loss, prepare, split_indices, train, train_step, Augmentation, CurveEntry, Example, LossCurve,
    Split, TrainConfig, CURVE_CSV_HEADER,
};
