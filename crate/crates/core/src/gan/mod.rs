//! Wasserstein GAN over fixed-length power windows.

pub mod arch;
mod model;
mod train;

pub use model::{
    discriminator_loss, generator_loss, sample_noise, value_function, Architecture, GanModel,
    WindowGeometry, MODEL_FORMAT,
};
pub(crate) use model::uniform_open;
pub use train::{
    train, Checkpoint, CriticStep, EarlyStop, TrainConfig, TrainLog, TrainRecord, Trainer,
    TrainingSet,
};
