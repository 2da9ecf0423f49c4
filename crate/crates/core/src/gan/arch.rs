//! Default generator and discriminator layouts.
//!
//! The conv layouts follow the two-convolution, two-dense shape; channel
//! counts, kernel sizes and widths are choices. Dense layouts exist for fast
//! tests and small experiments.

use crate::error::Result;
use crate::nn::{LayerSpec, NetworkSpec};

pub const CONV_KERNEL: usize = 4;
pub const CONV_STRIDE: usize = 2;
pub const CONV_PADDING: usize = 1;
pub const CONV_CHANNELS: (usize, usize) = (8, 16);

/// Stride-2 convolution length with kernel 4 and padding 1.
fn halve(len: usize) -> usize {
    (len + 2 * CONV_PADDING - CONV_KERNEL) / CONV_STRIDE + 1
}

/// Dense up-sample to `8 × 2L`, two stride-2 convolutions down to `16 × L/2`,
/// dense projection to the window. ReLU between layers, batch normalization
/// before every hidden layer, affine output.
pub fn conv_generator(latent_dim: usize, window_len: usize) -> Result<NetworkSpec> {
    let (c1, c2) = CONV_CHANNELS;
    let l0 = 2 * window_len;
    let l1 = halve(l0);
    let l2 = halve(l1);
    NetworkSpec::new(vec![
        LayerSpec::dense(latent_dim, c1 * l0),
        LayerSpec::batch_norm(c1 * l0),
        LayerSpec::relu(c1 * l0),
        LayerSpec::conv1d(c1, c2, l0, CONV_KERNEL, CONV_STRIDE, CONV_PADDING),
        LayerSpec::batch_norm(c2 * l1),
        LayerSpec::relu(c2 * l1),
        LayerSpec::conv1d(c2, c2, l1, CONV_KERNEL, CONV_STRIDE, CONV_PADDING),
        LayerSpec::batch_norm(c2 * l2),
        LayerSpec::relu(c2 * l2),
        LayerSpec::dense(c2 * l2, window_len),
    ])
}

/// Two stride-2 convolutions over the time axis, a hidden dense layer and a
/// raw affine critic output. Leaky-ReLU activations, no batch normalization.
pub fn conv_discriminator(window_len: usize, hidden: usize) -> Result<NetworkSpec> {
    let (c1, c2) = CONV_CHANNELS;
    let l1 = halve(window_len);
    let l2 = halve(l1);
    NetworkSpec::new(vec![
        LayerSpec::conv1d(1, c1, window_len, CONV_KERNEL, CONV_STRIDE, CONV_PADDING),
        LayerSpec::leaky_relu(c1 * l1),
        LayerSpec::conv1d(c1, c2, l1, CONV_KERNEL, CONV_STRIDE, CONV_PADDING),
        LayerSpec::leaky_relu(c2 * l2),
        LayerSpec::dense(c2 * l2, hidden),
        LayerSpec::leaky_relu(hidden),
        LayerSpec::dense(hidden, 1),
    ])
}

pub fn dense_generator(latent_dim: usize, hidden: usize, window_len: usize) -> Result<NetworkSpec> {
    NetworkSpec::new(vec![
        LayerSpec::dense(latent_dim, hidden),
        LayerSpec::batch_norm(hidden),
        LayerSpec::relu(hidden),
        LayerSpec::dense(hidden, hidden),
        LayerSpec::batch_norm(hidden),
        LayerSpec::relu(hidden),
        LayerSpec::dense(hidden, window_len),
    ])
}

/// Dense generator without batch norm. Training-mode batch norm keeps hidden
/// activations at unit spread, so the BN variants can only shrink output
/// spread through the affine scale; this one can concentrate quickly.
pub fn mlp_generator(latent_dim: usize, hidden: usize, window_len: usize) -> Result<NetworkSpec> {
    NetworkSpec::new(vec![
        LayerSpec::dense(latent_dim, hidden),
        LayerSpec::relu(hidden),
        LayerSpec::dense(hidden, hidden),
        LayerSpec::relu(hidden),
        LayerSpec::dense(hidden, window_len),
    ])
}

pub fn dense_discriminator(window_len: usize, hidden: usize) -> Result<NetworkSpec> {
    NetworkSpec::new(vec![
        LayerSpec::dense(window_len, hidden),
        LayerSpec::leaky_relu(hidden),
        LayerSpec::dense(hidden, hidden),
        LayerSpec::leaky_relu(hidden),
        LayerSpec::dense(hidden, 1),
    ])
}
