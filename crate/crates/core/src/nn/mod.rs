//! Small sequential networks (dense, 1-D convolution, batch normalization,
//! ReLU/Leaky-ReLU) with hand-written reverse-mode gradients, plus the
//! optimizers used for training and latent search.

mod network;
mod optim;
mod spec;
mod tensor;

pub use network::{
    backward, forward, init_weights, init_weights_with, BatchNormState, Gradients, LayerParams,
    Mode, Network, ParameterSet, RunningStats, Tape, BN_DECAY, INIT_STD,
};
pub use optim::{Momentum, RmsProp, RMSPROP_DECAY, RMSPROP_EPS};
pub use spec::{LayerSpec, NetworkSpec, DEFAULT_BN_EPS, DEFAULT_LEAK};
pub use tensor::{clip_in_place, clip_values, Tensor};
