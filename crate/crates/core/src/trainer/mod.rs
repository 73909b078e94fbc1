//! Optimization harnesses: Adam, direct assignment fitting, the toy encoder
//! with superpixel decoding, synthetic data and checkpoints.

mod adam;
mod checkpoint;
mod direct;
mod encoder;
mod synth;
mod train;

pub use adam::{Adam, Params};
pub use checkpoint::{Checkpoint, MAGIC};
pub use direct::{direct_fit, DirectFit, DirectFitConfig};
pub use encoder::{EncoderConfig, Forward, ToyEncoder};
pub use synth::{class_colors, synth_dataset, two_tone, Sample, NOISE_SIGMA};
pub use train::{
    argmax_labels, dataset_accuracy, holdout_split, predict, train_toy, training_loss, EpochLog, LossNodes, TrainConfig, TrainOutcome,
};
