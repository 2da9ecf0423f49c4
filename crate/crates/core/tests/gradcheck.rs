//! Central finite-difference oracle against the analytical backward pass.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenfc_core::nn::{LayerSpec, Mode, Network, NetworkSpec, Tensor};

const FD_EPS: f64 = 1e-6;

/// Scalar loss `Σ w ⊙ net(x)` with fixed random weights `w`.
fn loss(net: &Network, x: &Tensor, w: &Tensor, mode: Mode) -> f64 {
    let y = net.eval(x, mode).unwrap();
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Returns (param rel. error, input rel. error).
fn check(net: &Network, x: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (y, tape) = net.forward(x, mode).unwrap();
    let w_data: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = Tensor::new(y.shape().to_vec(), w_data).unwrap();
    let grads = net.backward(&tape, &w).unwrap();

    let flat = net.params.flatten();
    let mut probe = net.clone();
    let mut fd_params = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut p = flat.clone();
        p[i] = flat[i] + FD_EPS;
        probe.params.assign_flat(&p).unwrap();
        let up = loss(&probe, x, &w, mode);
        p[i] = flat[i] - FD_EPS;
        probe.params.assign_flat(&p).unwrap();
        let down = loss(&probe, x, &w, mode);
        fd_params.push((up - down) / (2.0 * FD_EPS));
    }
    let mut fd_input = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += FD_EPS;
        let up = loss(net, &xp, &w, mode);
        xp.data_mut()[i] -= 2.0 * FD_EPS;
        let down = loss(net, &xp, &w, mode);
        fd_input.push((up - down) / (2.0 * FD_EPS));
    }
    (
        rel_err(&grads.params.flatten(), &fd_params),
        rel_err(grads.input.data(), &fd_input),
    )
}

fn random_input(rng: &mut ChaCha8Rng, batch: usize, dim: usize) -> Tensor {
    let data = (0..batch * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(vec![batch, dim], data).unwrap()
}

/// Randomizes all parameters at unit scale so that gradients are not tiny.
fn randomize(net: &mut Network, rng: &mut ChaCha8Rng) {
    let n = net.params.num_values();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    net.params.assign_flat(&v).unwrap();
    for stats in net.bn.layers.iter_mut().flatten() {
        stats.mean.iter_mut().for_each(|m| *m = rng.random_range(-0.5..0.5));
        stats.var.iter_mut().for_each(|s| *s = rng.random_range(0.5..2.0));
    }
}

fn kind_network(kind: &str, rng: &mut ChaCha8Rng) -> NetworkSpec {
    let d = rng.random_range(2..8);
    let layers = match kind {
        "dense" => vec![LayerSpec::dense(d, rng.random_range(1..8))],
        "conv1d" => {
            let cin = rng.random_range(1..4);
            let len = rng.random_range(6..14);
            let kw = rng.random_range(1..5);
            let stride = rng.random_range(1..3);
            let pad = rng.random_range(0..kw);
            vec![LayerSpec::conv1d(cin, rng.random_range(1..4), len, kw, stride, pad)]
        }
        "batchnorm" => vec![LayerSpec::dense(d, d + 1), LayerSpec::batch_norm(d + 1)],
        "relu" => vec![LayerSpec::dense(d, d), LayerSpec::relu(d)],
        "leakyrelu" => vec![LayerSpec::dense(d, d), LayerSpec::leaky_relu(d)],
        "identity" => vec![LayerSpec::dense(d, d), LayerSpec::identity(d)],
        _ => unreachable!(),
    };
    NetworkSpec::new(layers).unwrap()
}

#[test]
fn every_layer_kind_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for kind in ["dense", "conv1d", "batchnorm", "relu", "leakyrelu", "identity"] {
        let modes: &[Mode] = if kind == "batchnorm" {
            &[Mode::Training, Mode::Frozen]
        } else {
            &[Mode::Frozen]
        };
        for &mode in modes {
            let mut worst = (0.0f64, 0.0f64);
            for _ in 0..100 {
                let spec = kind_network(kind, &mut rng);
                let mut net = Network::new(spec, rng.random());
                randomize(&mut net, &mut rng);
                let batch = rng.random_range(3..6);
                let x = random_input(&mut rng, batch, net.input_dim());
                let (ep, ei) = check(&net, &x, mode, &mut rng);
                worst = (worst.0.max(ep), worst.1.max(ei));
            }
            assert!(
                worst.0 < 1e-5 && worst.1 < 1e-5,
                "{kind} ({mode:?}): worst param err {:.2e}, input err {:.2e}",
                worst.0,
                worst.1
            );
        }
    }
}

fn arb_network() -> impl Strategy<Value = (Vec<u8>, Vec<usize>, u64)> {
    (
        prop::collection::vec(0u8..4, 1..=4),
        prop::collection::vec(1usize..=32, 5),
        any::<u64>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_stacks_match_finite_differences((kinds, dims, seed) in arb_network()) {
        // kinds: 0 dense, 1 dense+relu, 2 dense+leaky, 3 dense+batchnorm+leaky
        let mut layers = Vec::new();
        let mut d = dims[0];
        for (i, k) in kinds.iter().enumerate() {
            let out = dims[i + 1];
            layers.push(LayerSpec::dense(d, out));
            match k {
                1 => layers.push(LayerSpec::relu(out)),
                2 => layers.push(LayerSpec::leaky_relu(out)),
                3 => {
                    layers.push(LayerSpec::batch_norm(out));
                    layers.push(LayerSpec::leaky_relu(out));
                }
                _ => {}
            }
            d = out;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::new(NetworkSpec::new(layers).unwrap(), seed);
        randomize(&mut net, &mut rng);
        let x = random_input(&mut rng, 3, net.input_dim());
        for mode in [Mode::Training, Mode::Frozen] {
            let (ep, ei) = check(&net, &x, mode, &mut rng);
            prop_assert!(ep < 1e-5, "param err {:.2e}", ep);
            prop_assert!(ei < 1e-5, "input err {:.2e}", ei);
        }
    }
}
