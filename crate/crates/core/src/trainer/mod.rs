//! Contrastive training of a new projection pair over masked-max-pooled
//! image tokens. Encoder features are frozen inputs and never modified.

mod adamw;
mod checkpoint;
mod loss;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::SampleRecord;
use crate::error::{Error, Result};
use crate::itsm::Projection;
use crate::linalg::Matrix;
use crate::pooling::{masked_max_pool, prepare_attention};

pub use adamw::{adamw_step, AdamWState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use loss::{contrastive_loss, loss_gradients, Batch, Gradients, LossOutput};

/// Bounds on the logit scale `exp(log_temperature)`.
pub const MIN_LOGIT_SCALE: f64 = 1.0 / 100.0;
pub const MAX_LOGIT_SCALE: f64 = 100.0;
/// `ln(1 / 0.07)`.
pub const INITIAL_LOG_TEMPERATURE: f64 = 2.659_260_036_932_778;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    /// `C_image x D`.
    pub image: Matrix,
    /// `C_text x D`.
    pub text: Matrix,
    pub log_temperature: f64,
}

impl ProjectionPair {
    pub fn new(image: Matrix, text: Matrix, log_temperature: f64) -> Result<Self> {
        if image.cols() != text.cols() || image.cols() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "projection widths differ: {} vs {}",
                image.cols(),
                text.cols()
            )));
        }
        if !image.is_finite() || !text.is_finite() || !log_temperature.is_finite() {
            return Err(Error::Numeric("projection pair has non-finite values".into()));
        }
        let mut pair = Self {
            image,
            text,
            log_temperature,
        };
        pair.clamp_log_temperature();
        Ok(pair)
    }

    /// Gaussian initialization with standard deviation `1 / sqrt(C)` per side.
    pub fn random(image_dim: usize, text_dim: usize, proj_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample = |rows: usize| {
            let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("positive std");
            let data = (0..rows * proj_dim).map(|_| normal.sample(&mut rng)).collect();
            Matrix::from_vec(rows, proj_dim, data).expect("sized")
        };
        let image = sample(image_dim);
        let text = sample(text_dim);
        Self {
            image,
            text,
            log_temperature: INITIAL_LOG_TEMPERATURE,
        }
    }

    pub fn logit_scale(&self) -> f64 {
        self.log_temperature.exp()
    }

    pub fn proj_dim(&self) -> usize {
        self.image.cols()
    }

    pub(crate) fn clamp_log_temperature(&mut self) {
        self.log_temperature = self.log_temperature.clamp(MIN_LOGIT_SCALE.ln(), MAX_LOGIT_SCALE.ln());
    }

    pub fn projections(&self) -> Result<(Projection, Projection)> {
        Ok((
            Projection::new(self.image.clone())?,
            Projection::new(self.text.clone())?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Hard cap on optimizer steps.
    pub max_steps: usize,
    /// Width `D` of the projected space; the text width when unset.
    pub proj_dim: Option<usize>,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 0.05,
            batch_size: 64,
            epochs: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_steps: 2000,
            proj_dim: None,
            schedule: Schedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("learning_rate", self.learning_rate), ("eps", self.eps)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.proj_dim == Some(0) {
            return Err(Error::InvalidConfig("proj_dim must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate for 0-based `step` out of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine => {
                let frac = step as f64 / total.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pair: ProjectionPair,
    pub curve: Vec<LossPoint>,
    pub steps: usize,
}

/// Frozen training inputs: one masked-max-pooled token and one paired text
/// embedding per usable sample.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub pooled: Matrix,
    pub text: Matrix,
    pub ids: Vec<String>,
}

impl TrainingSet {
    /// Pools every sample with its attention mask and pairs it with the mean
    /// text embedding of its labels. Samples without labels are skipped.
    pub fn build(samples: &[SampleRecord], text_bank: &Matrix) -> Result<Self> {
        let mut pooled = Vec::new();
        let mut text = Vec::new();
        let mut ids = Vec::new();
        for s in samples {
            let att = s
                .attention
                .as_ref()
                .ok_or_else(|| Error::MissingAttention(s.id.clone()))?;
            if s.present_classes.is_empty() {
                log::warn!("sample {} has no labels; skipped for training", s.id);
                continue;
            }
            let tokens = s.image_tokens.to_matrix()?;
            let mask = prepare_attention(&att.to_matrix()?, tokens.cols())?;
            pooled.push(masked_max_pool(&tokens, &mask)?.vector);

            let mut caption = vec![0.0; text_bank.cols()];
            for &c in &s.present_classes {
                if c >= text_bank.rows() {
                    return Err(Error::InconsistentClassList(format!(
                        "sample {}: label {c} has no text embedding",
                        s.id
                    )));
                }
                caption.iter_mut().zip(text_bank.row(c)).for_each(|(a, &b)| *a += b);
            }
            let n = s.present_classes.len() as f64;
            caption.iter_mut().for_each(|v| *v /= n);
            text.push(caption);
            ids.push(s.id.clone());
        }
        if ids.is_empty() {
            return Err(Error::EmptyInput("no labeled samples to train on".into()));
        }
        Ok(Self {
            pooled: Matrix::from_rows(&pooled)?,
            text: Matrix::from_rows(&text)?,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let pick = |m: &Matrix| {
            let rows: Vec<Vec<f64>> = indices.iter().map(|&i| m.row(i).to_vec()).collect();
            Matrix::from_rows(&rows)
        };
        Batch::new(pick(&self.pooled)?, pick(&self.text)?)
    }
}

/// The untrained pair `train` would start from.
pub fn initial_pair(set: &TrainingSet, config: &TrainConfig) -> ProjectionPair {
    let d = config.proj_dim.unwrap_or(set.text.cols());
    ProjectionPair::random(set.pooled.cols(), set.text.cols(), d, config.seed)
}

/// Total optimizer steps for a set of `n` samples.
pub fn planned_steps(n: usize, config: &TrainConfig) -> usize {
    (config.epochs * n.div_ceil(config.batch_size)).min(config.max_steps)
}

pub fn train(samples: &[SampleRecord], text_bank: &Matrix, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let set = TrainingSet::build(samples, text_bank)?;
    train_on(&set, config)
}

/// Deterministic given `config.seed`: the shuffle stream is seeded
/// separately from the initialization.
pub fn train_on(set: &TrainingSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut pair = initial_pair(set, config);
    let mut state = AdamWState::new(&pair);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let total = planned_steps(set.len(), config);
    let mut curve = Vec::with_capacity(total);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut step = 0usize;

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            if step >= total {
                break 'epochs;
            }
            let batch = set.batch(chunk)?;
            let (loss, grads) = loss_gradients(&batch, &pair)?;
            let lr = config.lr_at(step, total);
            step += 1;
            adamw_step(&mut pair, &grads, &mut state, config, step as u64, lr);
            if !(pair.image.is_finite() && pair.text.is_finite()) {
                return Err(Error::Numeric(format!("parameters diverged at step {step}")));
            }
            curve.push(LossPoint { step, epoch, loss });
        }
    }
    Ok(TrainOutcome {
        pair,
        curve,
        steps: step,
    })
}
