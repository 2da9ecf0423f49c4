use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LEAK: f64 = 0.2;
pub const DEFAULT_BN_EPS: f64 = 1e-5;

fn default_bn_eps() -> f64 {
    DEFAULT_BN_EPS
}

/// One layer of a sequential network. Every layer consumes and produces a
/// flat feature vector per batch item; convolutions interpret it as
/// `channels × length`, channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        in_len: usize,
        kernel_width: usize,
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    BatchNorm {
        dim: usize,
        #[serde(default = "default_bn_eps")]
        eps: f64,
    },
    Relu {
        dim: usize,
    },
    LeakyRelu {
        dim: usize,
        leak: f64,
    },
    Identity {
        dim: usize,
    },
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec::Dense { in_dim, out_dim }
    }

    pub fn conv1d(
        in_channels: usize,
        out_channels: usize,
        in_len: usize,
        kernel_width: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            in_len,
            kernel_width,
            stride,
            padding,
        }
    }

    pub fn batch_norm(dim: usize) -> Self {
        LayerSpec::BatchNorm {
            dim,
            eps: DEFAULT_BN_EPS,
        }
    }

    pub fn relu(dim: usize) -> Self {
        LayerSpec::Relu { dim }
    }

    pub fn leaky_relu(dim: usize) -> Self {
        LayerSpec::LeakyRelu {
            dim,
            leak: DEFAULT_LEAK,
        }
    }

    pub fn identity(dim: usize) -> Self {
        LayerSpec::Identity { dim }
    }

    pub fn in_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { in_dim, .. } => in_dim,
            LayerSpec::Conv1d {
                in_channels,
                in_len,
                ..
            } => in_channels * in_len,
            LayerSpec::BatchNorm { dim, .. }
            | LayerSpec::Relu { dim }
            | LayerSpec::LeakyRelu { dim, .. }
            | LayerSpec::Identity { dim } => dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            LayerSpec::Dense { out_dim, .. } => out_dim,
            LayerSpec::Conv1d { out_channels, .. } => out_channels * self.conv_out_len(),
            _ => self.in_dim(),
        }
    }

    /// Output length of a convolution; zero for other kinds.
    pub fn conv_out_len(&self) -> usize {
        match *self {
            LayerSpec::Conv1d {
                in_len,
                kernel_width,
                stride,
                padding,
                ..
            } => {
                let padded = in_len + 2 * padding;
                if padded < kernel_width || stride == 0 {
                    0
                } else {
                    (padded - kernel_width) / stride + 1
                }
            }
            _ => 0,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } | LayerSpec::BatchNorm { .. }
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Relu { .. } => "relu",
            LayerSpec::LeakyRelu { .. } => "leakyrelu",
            LayerSpec::Identity { .. } => "identity",
        }
    }

    /// `(weight shape, bias shape)` for parameterized layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Dense { in_dim, out_dim } => Some((vec![out_dim, in_dim], vec![out_dim])),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_width,
                ..
            } => Some((
                vec![out_channels, in_channels, kernel_width],
                vec![out_channels],
            )),
            LayerSpec::BatchNorm { dim, .. } => Some((vec![dim], vec![dim])),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match *self {
            LayerSpec::Dense { in_dim, out_dim } if in_dim == 0 || out_dim == 0 => {
                bad("dense dimensions must be positive".into())
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                in_len,
                kernel_width,
                stride,
                padding,
            } => {
                if in_channels == 0 || out_channels == 0 || in_len == 0 {
                    bad("conv1d channels and length must be positive".into())
                } else if kernel_width == 0 || stride == 0 {
                    bad("conv1d kernel width and stride must be positive".into())
                } else if padding >= kernel_width {
                    bad("conv1d padding must be smaller than the kernel".into())
                } else if self.conv_out_len() == 0 {
                    bad(format!(
                        "conv1d kernel {kernel_width} longer than padded input {}",
                        in_len + 2 * padding
                    ))
                } else {
                    Ok(())
                }
            }
            LayerSpec::BatchNorm { dim, eps } => {
                if dim == 0 {
                    bad("batchnorm dimension must be positive".into())
                } else if !(eps >= 0.0) || !eps.is_finite() {
                    bad(format!("batchnorm eps must be finite and >= 0, got {eps}"))
                } else {
                    Ok(())
                }
            }
            LayerSpec::LeakyRelu { dim, leak } => {
                if dim == 0 {
                    bad("activation dimension must be positive".into())
                } else if !(leak > 0.0 && leak < 1.0) {
                    bad(format!("leak must lie in (0, 1), got {leak}"))
                } else {
                    Ok(())
                }
            }
            LayerSpec::Relu { dim } | LayerSpec::Identity { dim } if dim == 0 => {
                bad("activation dimension must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

/// Ordered stack of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidArgument("network needs at least one layer".into()))?;
        let spec = Self {
            input_dim: first.in_dim(),
            output_dim: layers.last().map(LayerSpec::out_dim).unwrap_or(0),
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.layers.first() else {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        };
        if matches!(first, LayerSpec::BatchNorm { .. }) {
            return Err(Error::InvalidArgument(
                "batch normalization may not be applied to the raw input".into(),
            ));
        }
        let mut dim = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.in_dim() != dim {
                return Err(Error::InvalidArgument(format!(
                    "layer {i} ({}) expects input dim {}, predecessor produces {dim}",
                    layer.kind_name(),
                    layer.in_dim()
                )));
            }
            dim = layer.out_dim();
        }
        if dim != self.output_dim {
            return Err(Error::InvalidArgument(format!(
                "declared output dim {} but layers produce {dim}",
                self.output_dim
            )));
        }
        Ok(())
    }
}
