//! Dense network that emulates cumulated model error from background
//! columns, and its use as a generator of error-tendency samples.

mod checkpoint;
mod mlp;
mod predictors;
mod train;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_file, write_checkpoint, write_checkpoint_file,
};
pub use mlp::{forward, infer, loss_and_gradient, Layer, MlpParams, MlpSpec, Mode};
pub use predictors::{
    generate_error_samples, increments_to_tendency, predict_increment, Frame, PredictorConfig,
    Tendency,
};
pub use train::{train, TrainHistory, TrainOptions, TrainingSet};
