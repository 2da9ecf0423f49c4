use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use super::arch;
use crate::error::{Error, Result};
use crate::nn::{Mode, Network, NetworkSpec, Tensor};

/// Split of a generated window into `h+1` history steps and `k` lead steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGeometry {
    pub h: usize,
    pub k: usize,
}

impl WindowGeometry {
    pub fn new(h: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument(
                "forecast horizon k must be at least 1".into(),
            ));
        }
        Ok(Self { h, k })
    }

    /// `h + k + 1`.
    pub fn window_len(&self) -> usize {
        self.h + self.k + 1
    }

    pub fn history_len(&self) -> usize {
        self.h + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[default]
    Conv,
    Dense,
    /// Dense generator without batch norm.
    Mlp,
}

/// Format tag written into every saved model.
pub const MODEL_FORMAT: &str = "scenfc-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model: GanModel,
}

/// Generator and critic pair over a fixed window geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub generator: Network,
    pub discriminator: Network,
    pub latent_dim: usize,
    pub geometry: WindowGeometry,
}

impl GanModel {
    pub fn from_specs(
        generator: NetworkSpec,
        discriminator: NetworkSpec,
        geometry: WindowGeometry,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Self {
            latent_dim: generator.input_dim,
            generator: Network::with_rng(generator, &mut rng),
            discriminator: Network::with_rng(discriminator, &mut rng),
            geometry,
        };
        model.validate()?;
        Ok(model)
    }

    /// Latent dimension defaults to the window length, i.e. `Z = [-1, 1]^{h+k+1}`.
    pub fn new(geometry: WindowGeometry, arch: Architecture, hidden: usize, seed: u64) -> Result<Self> {
        let len = geometry.window_len();
        let (g, d) = match arch {
            Architecture::Conv => (
                arch::conv_generator(len, len)?,
                arch::conv_discriminator(len, hidden)?,
            ),
            Architecture::Dense => (
                arch::dense_generator(len, hidden, len)?,
                arch::dense_discriminator(len, hidden)?,
            ),
            Architecture::Mlp => (
                arch::mlp_generator(len, hidden, len)?,
                arch::dense_discriminator(len, hidden)?,
            ),
        };
        Self::from_specs(g, d, geometry, seed)
    }

    pub fn window_len(&self) -> usize {
        self.geometry.window_len()
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        let len = self.window_len();
        let checks = [
            (self.generator.input_dim(), self.latent_dim, "generator input vs latent dim"),
            (self.generator.output_dim(), len, "generator output vs window length"),
            (self.discriminator.input_dim(), len, "discriminator input vs window length"),
            (self.discriminator.output_dim(), 1, "discriminator output"),
        ];
        for (actual, expected, what) in checks {
            if actual != expected {
                return Err(Error::InvalidArgument(format!(
                    "{what}: expected {expected}, got {actual}"
                )));
            }
        }
        Ok(())
    }

    /// G(z) for a `batch × latent_dim` tensor.
    pub fn generate_from(&self, z: &Tensor, mode: Mode) -> Result<Tensor> {
        self.generator.eval(z, mode)
    }

    /// D(x) as a plain vector, one critic value per row.
    pub fn critic(&self, x: &Tensor, mode: Mode) -> Result<Vec<f64>> {
        Ok(self.discriminator.eval(x, mode)?.into_data())
    }

    /// Versioned JSON document; floats round-trip bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.into(),
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Format(format!(
                "unsupported model format {:?} (expected {MODEL_FORMAT:?})",
                file.format
            )));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// First 16 hex digits of the SHA-256 of the serialized model.
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(self).expect("model serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }

    /// `n` generated windows from fresh uniform noise, batch norm frozen.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let z = sample_noise(n, self.latent_dim, rng)?;
        let out = self.generate_from(&z, Mode::Frozen)?;
        Ok(out.iter_rows().map(<[f64]>::to_vec).collect())
    }
}

/// `m × dim` i.i.d. draws from the open interval (−1, 1).
pub fn sample_noise<R: Rng + ?Sized>(m: usize, dim: usize, rng: &mut R) -> Result<Tensor> {
    if m == 0 || dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "noise batch must be non-empty, got {m} × {dim}"
        )));
    }
    let data = uniform_open(m * dim, rng);
    Tensor::new(vec![m, dim], data)
}

pub(crate) fn uniform_open<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let dist = Uniform::new(-1.0f64, 1.0).expect("valid range");
    (0..n)
        .map(|_| loop {
            let v = dist.sample(rng);
            if v > -1.0 {
                break v;
            }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_batch(t: &Tensor, width: usize, what: &str) -> Result<()> {
    if t.shape().len() != 2 || t.row_len() != width {
        return Err(Error::InvalidArgument(format!(
            "{what} batch has shape {:?}, expected rows of {width}",
            t.shape()
        )));
    }
    Ok(())
}

/// `L_D = −mean D(x) + mean D(G(z))`.
pub fn discriminator_loss(model: &GanModel, x: &Tensor, z: &Tensor, mode: Mode) -> Result<f64> {
    check_batch(x, model.window_len(), "data")?;
    check_batch(z, model.latent_dim, "noise")?;
    let real = model.critic(x, mode)?;
    let fake = model.critic(&model.generate_from(z, mode)?, mode)?;
    Ok(-mean(&real) + mean(&fake))
}

/// `L_G = −mean D(G(z))`.
pub fn generator_loss(model: &GanModel, z: &Tensor, mode: Mode) -> Result<f64> {
    check_batch(z, model.latent_dim, "noise")?;
    let fake = model.critic(&model.generate_from(z, mode)?, mode)?;
    Ok(-mean(&fake))
}

/// Minimax value `V(G, D) = mean D(x) − mean D(G(z))`.
pub fn value_function(model: &GanModel, x: &Tensor, z: &Tensor, mode: Mode) -> Result<f64> {
    check_batch(x, model.window_len(), "data")?;
    check_batch(z, model.latent_dim, "noise")?;
    let real = model.critic(x, mode)?;
    let fake = model.critic(&model.generate_from(z, mode)?, mode)?;
    Ok(mean(&real) - mean(&fake))
}
