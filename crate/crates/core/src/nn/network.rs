//! Sequential network evaluation with a recorded tape for reverse-mode
//! gradients with respect to both parameters and inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{LayerSpec, NetworkSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const INIT_STD: f64 = 0.02;
pub const BN_DECAY: f64 = 0.99;

/// Weight and bias of one parameterized layer. For batch normalization the
/// weight is the affine scale and the bias the shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Per-layer parameters; `None` for parameterless layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub layers: Vec<Option<LayerParams>>,
}

impl ParameterSet {
    /// All-zero parameters shaped after `spec`.
    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                l.param_shapes().map(|(w, b)| LayerParams {
                    weight: Tensor::zeros(w),
                    bias: Tensor::zeros(b),
                })
            })
            .collect();
        Self { layers }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    pub fn num_values(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// Flattened copy of every parameter in layer order (weight then bias).
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Inverse of [`ParameterSet::flatten`].
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_values() {
            return Err(Error::shape(&[self.num_values()], &[values.len()]));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().fold(0.0, |m, t| m.max(t.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    pub fn check_matches(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::shape(&[spec.layers.len()], &[self.layers.len()]));
        }
        for (p, l) in self.layers.iter().zip(&spec.layers) {
            match (p, l.param_shapes()) {
                (None, None) => {}
                (Some(p), Some((w, b))) => {
                    if p.weight.shape() != w.as_slice() {
                        return Err(Error::shape(&w, p.weight.shape()));
                    }
                    if p.bias.shape() != b.as_slice() {
                        return Err(Error::shape(&b, p.bias.shape()));
                    }
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "parameter presence does not match {} layer",
                        l.kind_name()
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Draws weights from N(0, 0.02²); biases and batch-norm shifts start at
/// zero, batch-norm scales at one.
pub fn init_weights(spec: &NetworkSpec, seed: u64) -> ParameterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_weights_with(spec, &mut rng)
}

pub fn init_weights_with<R: rand::Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> ParameterSet {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut params = ParameterSet::zeros_like(spec);
    for (p, l) in params.layers.iter_mut().zip(&spec.layers) {
        let Some(p) = p else { continue };
        match l {
            LayerSpec::BatchNorm { .. } => p.weight.data_mut().fill(1.0),
            _ => p
                .weight
                .data_mut()
                .iter_mut()
                .for_each(|w| *w = normal.sample(rng)),
        }
    }
    params
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Running batch-norm statistics, one slot per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub layers: Vec<Option<RunningStats>>,
    pub decay: f64,
}

impl BatchNormState {
    pub fn new(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| match *l {
                LayerSpec::BatchNorm { dim, .. } => Some(RunningStats {
                    mean: vec![0.0; dim],
                    var: vec![1.0; dim],
                }),
                _ => None,
            })
            .collect();
        Self {
            layers,
            decay: BN_DECAY,
        }
    }

    /// Folds the batch statistics recorded on a training-mode tape into the
    /// running averages.
    pub fn update_from(&mut self, tape: &Tape) -> Result<()> {
        if tape.mode != Mode::Training {
            return Err(Error::InvalidArgument(
                "running statistics can only be updated from a training-mode tape".into(),
            ));
        }
        let d = self.decay;
        for (slot, rec) in self.layers.iter_mut().zip(&tape.records) {
            if let (Some(stats), LayerRecord::BatchNorm { mean, var, .. }) = (slot, rec) {
                for (r, m) in stats.mean.iter_mut().zip(mean) {
                    *r = d * *r + (1.0 - d) * m;
                }
                for (r, v) in stats.var.iter_mut().zip(var) {
                    *r = d * *r + (1.0 - d) * v;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Batch normalization uses statistics of the current batch.
    Training,
    /// Batch normalization uses running statistics; evaluation is per-sample.
    Frozen,
}

#[derive(Debug, Clone)]
enum LayerRecord {
    /// Layer input, needed by dense/conv/activation backward passes.
    Input(Tensor),
    BatchNorm {
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    },
    Identity,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    mode: Mode,
    batch: usize,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    records: Vec<LayerRecord>,
}

impl Tape {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Gradients of a scalar loss with respect to parameters and input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParameterSet,
    pub input: Tensor,
}

fn check_input(spec: &NetworkSpec, input: &Tensor) -> Result<usize> {
    if input.shape().len() != 2 || input.row_len() != spec.input_dim {
        return Err(Error::shape(&[input.rows(), spec.input_dim], input.shape()));
    }
    if !input.is_finite() {
        return Err(Error::NonFinite("network input".into()));
    }
    Ok(input.rows())
}

/// Runs `input` (`batch × input_dim`) through the network.
pub fn forward(
    spec: &NetworkSpec,
    params: &ParameterSet,
    bn: &BatchNormState,
    input: &Tensor,
    mode: Mode,
) -> Result<(Tensor, Tape)> {
    let batch = check_input(spec, input)?;
    params.check_matches(spec)?;
    if bn.layers.len() != spec.layers.len() {
        return Err(Error::shape(&[spec.layers.len()], &[bn.layers.len()]));
    }
    let mut records = Vec::with_capacity(spec.layers.len());
    let mut x = input.clone();
    for ((layer, p), stats) in spec.layers.iter().zip(&params.layers).zip(&bn.layers) {
        let (y, rec) = match *layer {
            LayerSpec::Dense { in_dim, out_dim } => {
                let p = p.as_ref().expect("checked");
                let y = dense_forward(&x, p, batch, in_dim, out_dim);
                (y, LayerRecord::Input(x))
            }
            LayerSpec::Conv1d { .. } => {
                let p = p.as_ref().expect("checked");
                let y = conv_forward(layer, &x, p, batch);
                (y, LayerRecord::Input(x))
            }
            LayerSpec::BatchNorm { dim, eps } => {
                let p = p.as_ref().expect("checked");
                let stats = stats.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("missing batch-norm running statistics".into())
                })?;
                batch_norm_forward(&x, p, stats, batch, dim, eps, mode)
            }
            LayerSpec::Relu { .. } => {
                let mut y = x.clone();
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                (y, LayerRecord::Input(x))
            }
            LayerSpec::LeakyRelu { leak, .. } => {
                let mut y = x.clone();
                y.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = if *v > 0.0 { *v } else { leak * *v });
                (y, LayerRecord::Input(x))
            }
            LayerSpec::Identity { .. } => (x, LayerRecord::Identity),
        };
        records.push(rec);
        x = y;
    }
    let tape = Tape {
        mode,
        batch,
        input_shape: input.shape().to_vec(),
        output_shape: x.shape().to_vec(),
        records,
    };
    Ok((x, tape))
}

/// Back-propagates `upstream` (d loss / d output) through a recorded pass.
pub fn backward(
    spec: &NetworkSpec,
    params: &ParameterSet,
    tape: &Tape,
    upstream: &Tensor,
) -> Result<Gradients> {
    if upstream.shape() != tape.output_shape.as_slice() {
        return Err(Error::shape(&tape.output_shape, upstream.shape()));
    }
    if tape.records.len() != spec.layers.len() {
        return Err(Error::shape(&[spec.layers.len()], &[tape.records.len()]));
    }
    let batch = tape.batch;
    let mut grads = ParameterSet::zeros_like(spec);
    let mut g = upstream.clone();
    for i in (0..spec.layers.len()).rev() {
        let layer = &spec.layers[i];
        let rec = &tape.records[i];
        g = match (layer, rec) {
            (LayerSpec::Dense { in_dim, out_dim }, LayerRecord::Input(x)) => {
                let p = params.layers[i].as_ref().expect("checked");
                let gp = grads.layers[i].as_mut().expect("shaped");
                dense_backward(x, p, gp, &g, batch, *in_dim, *out_dim)
            }
            (LayerSpec::Conv1d { .. }, LayerRecord::Input(x)) => {
                let p = params.layers[i].as_ref().expect("checked");
                let gp = grads.layers[i].as_mut().expect("shaped");
                conv_backward(layer, x, p, gp, &g, batch)
            }
            (
                LayerSpec::BatchNorm { dim, .. },
                LayerRecord::BatchNorm { x_hat, inv_std, .. },
            ) => {
                let p = params.layers[i].as_ref().expect("checked");
                let gp = grads.layers[i].as_mut().expect("shaped");
                batch_norm_backward(x_hat, inv_std, p, gp, &g, batch, *dim, tape.mode)
            }
            (LayerSpec::Relu { .. }, LayerRecord::Input(x)) => {
                // subgradient 0 at exactly 0
                for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
                    if *xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                g
            }
            (LayerSpec::LeakyRelu { leak, .. }, LayerRecord::Input(x)) => {
                for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
                    if *xv <= 0.0 {
                        *gv *= leak;
                    }
                }
                g
            }
            (LayerSpec::Identity { .. }, LayerRecord::Identity) => g,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "tape record {i} does not match {} layer",
                    layer.kind_name()
                )))
            }
        };
    }
    let input = g.reshape(tape.input_shape.clone())?;
    Ok(Gradients {
        params: grads,
        input,
    })
}

fn dense_forward(x: &Tensor, p: &LayerParams, batch: usize, in_dim: usize, out_dim: usize) -> Tensor {
    let w = p.weight.data();
    let b = p.bias.data();
    let xs = x.data();
    let mut y = vec![0.0; batch * out_dim];
    for n in 0..batch {
        let xr = &xs[n * in_dim..(n + 1) * in_dim];
        for o in 0..out_dim {
            let wr = &w[o * in_dim..(o + 1) * in_dim];
            y[n * out_dim + o] = b[o] + dot(wr, xr);
        }
    }
    Tensor::new(vec![batch, out_dim], y).expect("shape")
}

fn dense_backward(
    x: &Tensor,
    p: &LayerParams,
    gp: &mut LayerParams,
    g: &Tensor,
    batch: usize,
    in_dim: usize,
    out_dim: usize,
) -> Tensor {
    let w = p.weight.data();
    let xs = x.data();
    let gs = g.data();
    let mut dx = vec![0.0; batch * in_dim];
    {
        let gw = gp.weight.data_mut();
        for n in 0..batch {
            let xr = &xs[n * in_dim..(n + 1) * in_dim];
            let dxr = &mut dx[n * in_dim..(n + 1) * in_dim];
            for o in 0..out_dim {
                let go = gs[n * out_dim + o];
                if go == 0.0 {
                    continue;
                }
                let wr = &w[o * in_dim..(o + 1) * in_dim];
                let gwr = &mut gw[o * in_dim..(o + 1) * in_dim];
                for i in 0..in_dim {
                    gwr[i] += go * xr[i];
                    dxr[i] += go * wr[i];
                }
            }
        }
    }
    let gb = gp.bias.data_mut();
    for n in 0..batch {
        for o in 0..out_dim {
            gb[o] += gs[n * out_dim + o];
        }
    }
    Tensor::new(vec![batch, in_dim], dx).expect("shape")
}

fn conv_forward(layer: &LayerSpec, x: &Tensor, p: &LayerParams, batch: usize) -> Tensor {
    let LayerSpec::Conv1d {
        in_channels: cin,
        out_channels: cout,
        in_len,
        kernel_width: kw,
        stride,
        padding,
    } = *layer
    else {
        unreachable!()
    };
    let out_len = layer.conv_out_len();
    let w = p.weight.data();
    let b = p.bias.data();
    let xs = x.data();
    let in_dim = cin * in_len;
    let out_dim = cout * out_len;
    let mut y = vec![0.0; batch * out_dim];
    for n in 0..batch {
        let xn = &xs[n * in_dim..(n + 1) * in_dim];
        let yn = &mut y[n * out_dim..(n + 1) * out_dim];
        for co in 0..cout {
            for t in 0..out_len {
                let mut acc = b[co];
                let start = (t * stride) as isize - padding as isize;
                for ci in 0..cin {
                    let wk = &w[(co * cin + ci) * kw..(co * cin + ci + 1) * kw];
                    let xc = &xn[ci * in_len..(ci + 1) * in_len];
                    for (j, wv) in wk.iter().enumerate() {
                        let pos = start + j as isize;
                        if pos >= 0 && (pos as usize) < in_len {
                            acc += wv * xc[pos as usize];
                        }
                    }
                }
                yn[co * out_len + t] = acc;
            }
        }
    }
    Tensor::new(vec![batch, out_dim], y).expect("shape")
}

fn conv_backward(
    layer: &LayerSpec,
    x: &Tensor,
    p: &LayerParams,
    gp: &mut LayerParams,
    g: &Tensor,
    batch: usize,
) -> Tensor {
    let LayerSpec::Conv1d {
        in_channels: cin,
        out_channels: cout,
        in_len,
        kernel_width: kw,
        stride,
        padding,
    } = *layer
    else {
        unreachable!()
    };
    let out_len = layer.conv_out_len();
    let w = p.weight.data();
    let xs = x.data();
    let gs = g.data();
    let in_dim = cin * in_len;
    let out_dim = cout * out_len;
    let mut dx = vec![0.0; batch * in_dim];
    {
        let gw = gp.weight.data_mut();
        for n in 0..batch {
            let xn = &xs[n * in_dim..(n + 1) * in_dim];
            let gn = &gs[n * out_dim..(n + 1) * out_dim];
            let dxn = &mut dx[n * in_dim..(n + 1) * in_dim];
            for co in 0..cout {
                for t in 0..out_len {
                    let go = gn[co * out_len + t];
                    if go == 0.0 {
                        continue;
                    }
                    let start = (t * stride) as isize - padding as isize;
                    for ci in 0..cin {
                        let base = (co * cin + ci) * kw;
                        for j in 0..kw {
                            let pos = start + j as isize;
                            if pos >= 0 && (pos as usize) < in_len {
                                let xi = ci * in_len + pos as usize;
                                gw[base + j] += go * xn[xi];
                                dxn[xi] += go * w[base + j];
                            }
                        }
                    }
                }
            }
        }
    }
    let gb = gp.bias.data_mut();
    for n in 0..batch {
        for co in 0..cout {
            let row = &gs[n * out_dim + co * out_len..n * out_dim + (co + 1) * out_len];
            gb[co] += row.iter().sum::<f64>();
        }
    }
    Tensor::new(vec![batch, in_dim], dx).expect("shape")
}

fn batch_norm_forward(
    x: &Tensor,
    p: &LayerParams,
    stats: &RunningStats,
    batch: usize,
    dim: usize,
    eps: f64,
    mode: Mode,
) -> (Tensor, LayerRecord) {
    let xs = x.data();
    let (mean, var) = match mode {
        Mode::Training => {
            let nb = batch as f64;
            let mut mean = vec![0.0; dim];
            for row in xs.chunks(dim) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nb);
            let mut var = vec![0.0; dim];
            for row in xs.chunks(dim) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    let d = v - m;
                    *s += d * d;
                }
            }
            var.iter_mut().for_each(|s| *s /= nb);
            (mean, var)
        }
        Mode::Frozen => (stats.mean.clone(), stats.var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let gamma = p.weight.data();
    let beta = p.bias.data();
    let mut x_hat = vec![0.0; batch * dim];
    let mut y = vec![0.0; batch * dim];
    for n in 0..batch {
        for f in 0..dim {
            let i = n * dim + f;
            let xh = (xs[i] - mean[f]) * inv_std[f];
            x_hat[i] = xh;
            y[i] = gamma[f] * xh + beta[f];
        }
    }
    let y = Tensor::new(vec![batch, dim], y).expect("shape");
    (
        y,
        LayerRecord::BatchNorm {
            x_hat,
            inv_std,
            mean,
            var,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn batch_norm_backward(
    x_hat: &[f64],
    inv_std: &[f64],
    p: &LayerParams,
    gp: &mut LayerParams,
    g: &Tensor,
    batch: usize,
    dim: usize,
    mode: Mode,
) -> Tensor {
    let gamma = p.weight.data();
    let gs = g.data();
    let mut sum_g = vec![0.0; dim];
    let mut sum_gx = vec![0.0; dim];
    for n in 0..batch {
        for f in 0..dim {
            let i = n * dim + f;
            sum_g[f] += gs[i];
            sum_gx[f] += gs[i] * x_hat[i];
        }
    }
    for f in 0..dim {
        gp.weight.data_mut()[f] += sum_gx[f];
        gp.bias.data_mut()[f] += sum_g[f];
    }
    let mut dx = vec![0.0; batch * dim];
    match mode {
        Mode::Frozen => {
            for n in 0..batch {
                for f in 0..dim {
                    let i = n * dim + f;
                    dx[i] = gs[i] * gamma[f] * inv_std[f];
                }
            }
        }
        Mode::Training => {
            let nb = batch as f64;
            for n in 0..batch {
                for f in 0..dim {
                    let i = n * dim + f;
                    // d x_hat = g * gamma; sums scale by gamma as well
                    let dxh = gs[i] * gamma[f];
                    let mean_dxh = gamma[f] * sum_g[f] / nb;
                    let mean_dxh_xh = gamma[f] * sum_gx[f] / nb;
                    dx[i] = inv_std[f] * (dxh - mean_dxh - x_hat[i] * mean_dxh_xh);
                }
            }
        }
    }
    Tensor::new(vec![batch, dim], dx).expect("shape")
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Network spec bundled with its parameters and batch-norm state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: ParameterSet,
    pub bn: BatchNormState,
}

impl Network {
    pub fn new(spec: NetworkSpec, seed: u64) -> Self {
        let params = init_weights(&spec, seed);
        let bn = BatchNormState::new(&spec);
        Self { spec, params, bn }
    }

    pub fn with_rng<R: rand::Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Self {
        let params = init_weights_with(&spec, rng);
        let bn = BatchNormState::new(&spec);
        Self { spec, params, bn }
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<(Tensor, Tape)> {
        forward(&self.spec, &self.params, &self.bn, input, mode)
    }

    /// Forward pass without keeping the tape.
    pub fn eval(&self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        self.forward(input, mode).map(|(y, _)| y)
    }

    pub fn backward(&self, tape: &Tape, upstream: &Tensor) -> Result<Gradients> {
        backward(&self.spec, &self.params, tape, upstream)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.params.check_matches(&self.spec)?;
        if self.bn.layers.len() != self.spec.layers.len() {
            return Err(Error::shape(&[self.spec.layers.len()], &[self.bn.layers.len()]));
        }
        if !self.params.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(())
    }
}
