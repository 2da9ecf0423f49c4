//! Alternating critic/generator training with weight clipping and RMSProp.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{sample_noise, GanModel};
use crate::error::{Error, Result};
use crate::nn::{clip_in_place, Mode, RmsProp, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Stop once the smoothed critic gap stays below this value...
    pub threshold: f64,
    /// ...for this many consecutive generator iterations.
    pub patience: usize,
    /// Length of the moving-average window over `|E D(x) − E D(G(z))|`.
    pub window: usize,
}

impl EarlyStop {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            patience: 500,
            window: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Critic parameters are clipped to `[-clip, clip]`.
    pub clip: f64,
    pub batch_size: usize,
    /// Critic updates per generator update.
    pub n_discri: usize,
    /// Generator iterations.
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            clip: 0.01,
            batch_size: 64,
            n_discri: 4,
            iterations: 10_000,
            seed: 0,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        if self.batch_size == 0 || self.n_discri == 0 {
            return bad("batch size and n_discri must be positive".into());
        }
        if let Some(es) = &self.early_stop {
            if es.window == 0 || es.patience == 0 || !(es.threshold > 0.0) {
                return bad("early stop needs positive threshold, window and patience".into());
            }
        }
        Ok(())
    }
}

/// One generator iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    /// E D(x) over the last critic batch.
    pub mean_real: f64,
    /// E D(G(z)) over the last critic batch.
    pub mean_fake: f64,
    pub loss_d: f64,
    pub loss_g: f64,
    /// Largest |θ_D| seen after any clip in this iteration.
    pub critic_max_abs: f64,
    /// Not serialized, so checkpoints stay byte-reproducible.
    #[serde(skip)]
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with columns `iteration,mean_d_real,mean_d_fake,loss_d,loss_g`.
    /// Wall time is left out so the file is reproducible.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "mean_d_real", "mean_d_fake", "loss_d", "loss_g"])?;
        for r in &self.records {
            out.write_record([
                r.iteration.to_string(),
                r.mean_real.to_string(),
                r.mean_fake.to_string(),
                r.loss_d.to_string(),
                r.loss_g.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("train log", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        let bytes = hex::decode(&self.seed)
            .map_err(|e| Error::Format(format!("bad rng seed in checkpoint: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Format("rng seed must be 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Format(format!("bad rng position in checkpoint: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct StopState {
    gaps: Vec<f64>,
    below: usize,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: GanModel,
    pub config: TrainConfig,
    pub iteration: usize,
    pub log: TrainLog,
    opt_g: RmsProp,
    opt_d: RmsProp,
    rng: RngState,
    stop: StopState,
}

/// Windows of equal length with values in [0, 1].
#[derive(Debug, Clone)]
pub struct TrainingSet {
    rows: Vec<Vec<f64>>,
    len: usize,
}

impl TrainingSet {
    pub fn new(rows: Vec<Vec<f64>>, window_len: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != window_len {
                return Err(Error::Data(format!(
                    "window {i} has length {}, model expects {window_len}",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Data(format!("window {i} holds value {v} outside [0, 1]")));
            }
        }
        Ok(Self {
            rows,
            len: window_len,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn sample_batch<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Tensor {
        let mut data = Vec::with_capacity(m * self.len);
        for _ in 0..m {
            let i = rng.random_range(0..self.rows.len());
            data.extend_from_slice(&self.rows[i]);
        }
        Tensor::new(vec![m, self.len], data).expect("shape")
    }
}

/// Outcome of one critic update.
#[derive(Debug, Clone, Copy)]
pub struct CriticStep {
    pub mean_real: f64,
    pub mean_fake: f64,
    pub loss_d: f64,
    pub max_abs_after_clip: f64,
}

pub struct Trainer {
    model: GanModel,
    config: TrainConfig,
    opt_g: RmsProp,
    opt_d: RmsProp,
    rng: ChaCha8Rng,
    iteration: usize,
    log: TrainLog,
    stop: StopState,
}

impl Trainer {
    pub fn new(model: GanModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            model,
            config,
            opt_g: RmsProp::default(),
            opt_d: RmsProp::default(),
            rng,
            iteration: 0,
            log: TrainLog::default(),
            stop: StopState::default(),
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.config.validate()?;
        ck.model.validate()?;
        Ok(Self {
            rng: ck.rng.restore()?,
            model: ck.model,
            config: ck.config,
            opt_g: ck.opt_g,
            opt_d: ck.opt_d,
            iteration: ck.iteration,
            log: ck.log,
            stop: ck.stop,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            config: self.config.clone(),
            iteration: self.iteration,
            log: self.log.clone(),
            opt_g: self.opt_g.clone(),
            opt_d: self.opt_d.clone(),
            rng: RngState::capture(&self.rng),
            stop: self.stop.clone(),
        }
    }

    pub fn model(&self) -> &GanModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed generator iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn into_parts(self) -> (GanModel, TrainLog) {
        (self.model, self.log)
    }

    /// One critic update: descend on `L_D`, then clip θ_D into `[-c, c]`.
    /// The generator runs with batch statistics but is not modified.
    pub fn discriminator_step(&mut self, data: &TrainingSet) -> Result<CriticStep> {
        let m = self.config.batch_size;
        let x = data.sample_batch(m, &mut self.rng);
        let z = sample_noise(m, self.model.latent_dim, &mut self.rng)?;
        let fake = self.model.generator.eval(&z, Mode::Training)?;
        let d = &self.model.discriminator;
        let (real_out, real_tape) = d.forward(&x, Mode::Training)?;
        let (fake_out, fake_tape) = d.forward(&fake, Mode::Training)?;
        let mean_real = real_out.mean();
        let mean_fake = fake_out.mean();
        let loss_d = -mean_real + mean_fake;
        if !loss_d.is_finite() {
            return Err(Error::Numerical(format!(
                "critic loss became {loss_d} at iteration {}",
                self.iteration
            )));
        }
        let inv = 1.0 / m as f64;
        let up_real = Tensor::filled(real_out.shape().to_vec(), -inv);
        let up_fake = Tensor::filled(fake_out.shape().to_vec(), inv);
        let mut grads = d.backward(&real_tape, &up_real)?.params;
        let g_fake = d.backward(&fake_tape, &up_fake)?.params;
        for (a, b) in grads.tensors_mut().zip(g_fake.tensors()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        let disc = &mut self.model.discriminator;
        disc.bn.update_from(&real_tape)?;
        disc.bn.update_from(&fake_tape)?;
        self.opt_d
            .step(&mut disc.params, &grads, self.config.learning_rate)?;
        let c = self.config.clip;
        for t in disc.params.tensors_mut() {
            clip_in_place(t.data_mut(), -c, c)?;
        }
        Ok(CriticStep {
            mean_real,
            mean_fake,
            loss_d,
            max_abs_after_clip: disc.params.max_abs(),
        })
    }

    /// One generator update on `L_G`; the critic is evaluated but not modified.
    /// Returns `L_G`.
    pub fn generator_step(&mut self) -> Result<f64> {
        let m = self.config.batch_size;
        let z = sample_noise(m, self.model.latent_dim, &mut self.rng)?;
        let (fake, g_tape) = self.model.generator.forward(&z, Mode::Training)?;
        let (d_out, d_tape) = self.model.discriminator.forward(&fake, Mode::Training)?;
        let loss_g = -d_out.mean();
        if !loss_g.is_finite() {
            return Err(Error::Numerical(format!(
                "generator loss became {loss_g} at iteration {}",
                self.iteration
            )));
        }
        let up = Tensor::filled(d_out.shape().to_vec(), -1.0 / m as f64);
        let d_in = self.model.discriminator.backward(&d_tape, &up)?.input;
        let grads = self.model.generator.backward(&g_tape, &d_in)?.params;
        let gen = &mut self.model.generator;
        self.opt_g
            .step(&mut gen.params, &grads, self.config.learning_rate)?;
        gen.bn.update_from(&g_tape)?;
        Ok(loss_g)
    }

    /// Runs `n_discri` critic updates and one generator update, appending a
    /// log record.
    pub fn step(&mut self, data: &TrainingSet) -> Result<&TrainRecord> {
        if data.len != self.model.window_len() {
            return Err(Error::Data(format!(
                "training windows have length {}, model expects {}",
                data.len,
                self.model.window_len()
            )));
        }
        let start = Instant::now();
        let mut last = None;
        let mut max_abs: f64 = 0.0;
        for _ in 0..self.config.n_discri {
            let s = self.discriminator_step(data)?;
            max_abs = max_abs.max(s.max_abs_after_clip);
            last = Some(s);
        }
        let critic = last.expect("n_discri >= 1");
        let loss_g = self.generator_step()?;
        self.iteration += 1;
        self.log.records.push(TrainRecord {
            iteration: self.iteration,
            mean_real: critic.mean_real,
            mean_fake: critic.mean_fake,
            loss_d: critic.loss_d,
            loss_g,
            critic_max_abs: max_abs,
            wall_secs: start.elapsed().as_secs_f64(),
        });
        Ok(self.log.records.last().expect("just pushed"))
    }

    fn should_stop(&mut self) -> bool {
        let Some(es) = &self.config.early_stop else {
            return false;
        };
        let Some(r) = self.log.records.last() else {
            return false;
        };
        self.stop.gaps.push((r.mean_real - r.mean_fake).abs());
        if self.stop.gaps.len() > es.window {
            self.stop.gaps.remove(0);
        }
        let avg = self.stop.gaps.iter().sum::<f64>() / self.stop.gaps.len() as f64;
        if self.stop.gaps.len() == es.window && avg < es.threshold {
            self.stop.below += 1;
        } else {
            self.stop.below = 0;
        }
        self.stop.below >= es.patience
    }

    /// Trains until the configured iteration budget (or early stop). The
    /// callback sees the trainer after every iteration, e.g. to checkpoint.
    pub fn run<F, E>(&mut self, data: &TrainingSet, mut on_iteration: F) -> std::result::Result<(), E>
    where
        F: FnMut(&Trainer) -> std::result::Result<(), E>,
        E: From<Error>,
    {
        while self.iteration < self.config.iterations {
            self.step(data)?;
            let stop = self.should_stop();
            on_iteration(self)?;
            if stop {
                break;
            }
        }
        Ok(())
    }
}

/// Trains `model` on `dataset` for `config.iterations` generator iterations.
pub fn train(model: GanModel, dataset: &TrainingSet, config: TrainConfig) -> Result<(GanModel, TrainLog)> {
    let mut trainer = Trainer::new(model, config)?;
    trainer.run(dataset, |_| Ok::<(), Error>(()))?;
    Ok(trainer.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::{Architecture, WindowGeometry};

    fn setup(iterations: usize) -> (GanModel, TrainingSet, TrainConfig) {
        let geo = WindowGeometry::new(2, 3).unwrap();
        let model = GanModel::new(geo, Architecture::Dense, 8, 1).unwrap();
        let rows = (0..20)
            .map(|i| (0..6).map(|j| ((i + j) % 7) as f64 / 7.0).collect())
            .collect();
        let data = TrainingSet::new(rows, 6).unwrap();
        let config = TrainConfig {
            iterations,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 4,
            ..TrainConfig::default()
        };
        (model, data, config)
    }

    #[test]
    fn zero_iterations_leaves_parameters_untouched() {
        let (model, data, config) = setup(0);
        let (trained, log) = train(model.clone(), &data, config).unwrap();
        assert_eq!(trained, model);
        assert!(log.is_empty());
    }

    #[test]
    fn critic_weights_stay_clipped_and_log_is_complete() {
        let (model, data, config) = setup(30);
        let (trained, log) = train(model, &data, config.clone()).unwrap();
        assert!(trained.discriminator.params.max_abs() <= config.clip);
        assert_eq!(log.len(), 30);
        assert!(log.records.iter().all(|r| r.critic_max_abs <= config.clip));
        assert!(log
            .records
            .iter()
            .all(|r| r.loss_d.is_finite() && r.loss_g.is_finite()));
    }

    #[test]
    fn steps_touch_only_their_own_network() {
        let (model, data, config) = setup(1);
        let mut t = Trainer::new(model, config).unwrap();
        let g_before = t.model().generator.clone();
        let d_before = t.model().discriminator.clone();
        t.discriminator_step(&data).unwrap();
        assert_eq!(t.model().generator, g_before);
        assert_ne!(t.model().discriminator, d_before);
        let d_mid = t.model().discriminator.clone();
        t.generator_step().unwrap();
        assert_eq!(t.model().discriminator, d_mid);
        assert_ne!(t.model().generator.params, g_before.params);
    }

    #[test]
    fn training_is_reproducible() {
        let (model, data, config) = setup(15);
        let a = train(model.clone(), &data, config.clone()).unwrap();
        let b = train(model, &data, config).unwrap();
        assert_eq!(a.0, b.0);
        let strip = |l: &TrainLog| -> Vec<(f64, f64, f64, f64)> {
            l.records
                .iter()
                .map(|r| (r.mean_real, r.mean_fake, r.loss_d, r.loss_g))
                .collect()
        };
        assert_eq!(strip(&a.1), strip(&b.1));
    }

    #[test]
    fn resuming_from_checkpoint_matches_continuous_run() {
        let (model, data, config) = setup(12);
        let (full, full_log) = train(model.clone(), &data, config.clone()).unwrap();

        let mut partial = Trainer::new(model, TrainConfig { iterations: 5, ..config.clone() }).unwrap();
        partial.run(&data, |_| Ok::<(), Error>(())).unwrap();
        let json = serde_json::to_string(&partial.checkpoint()).unwrap();
        let mut ck: Checkpoint = serde_json::from_str(&json).unwrap();
        ck.config.iterations = 12;
        let mut resumed = Trainer::from_checkpoint(ck).unwrap();
        resumed.run(&data, |_| Ok::<(), Error>(())).unwrap();
        let (model, log) = resumed.into_parts();
        assert_eq!(model, full);
        let mut a = Vec::new();
        let mut b = Vec::new();
        log.write_csv(&mut a).unwrap();
        full_log.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TrainingSet::new(vec![], 3).is_err());
        assert!(TrainingSet::new(vec![vec![0.1, 0.2]], 3).is_err());
        assert!(TrainingSet::new(vec![vec![0.1, 1.2, 0.0]], 3).is_err());
        let (model, _, config) = setup(1);
        let other = TrainingSet::new(vec![vec![0.5; 4]], 4).unwrap();
        let mut t = Trainer::new(model, config).unwrap();
        assert!(t.step(&other).is_err());
    }

    #[test]
    fn early_stop_cuts_the_run_short() {
        let (model, data, mut config) = setup(2000);
        config.early_stop = Some(EarlyStop {
            threshold: 1e9,
            patience: 3,
            window: 2,
        });
        let (_, log) = train(model, &data, config).unwrap();
        assert_eq!(log.len(), 4);
    }
}
