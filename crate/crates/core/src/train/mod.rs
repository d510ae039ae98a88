//! Desk-scale training harness: synthetic speakers, view augmentations, an
//! MLP encoder with hand-written backprop, and the supervised / semi /
//! unsupervised regimes sharing one loss.

pub mod augment;
pub mod data;
pub mod encoder;
mod trainer;

pub use augment::{AugmentationSpec, Transform};
pub use data::{hide_labels, synth_dataset, Dataset, LabelSplit, Split, SyntheticConfig};
pub use encoder::{Encoder, EncoderShape};
pub use trainer::{
    compose_semi_minibatch, minibatch_gradients, train, train_with, Mode, StepGradients, StepMetrics, SupervisedAffinity,
    TrainConfig, TrainOutcome,
};
