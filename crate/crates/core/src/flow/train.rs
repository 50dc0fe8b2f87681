//! Maximum-likelihood training with Adam and best-validation checkpointing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Architecture, FlowModel, Standardization};
use crate::error::{Error, Result};

/// Learning-rate schedule over the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Half-cosine decay from the base rate to zero.
    Cosine,
}

impl Schedule {
    fn factor(self, progress: f64) -> f64 {
        match self {
            Schedule::Constant => 1.0,
            Schedule::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()),
        }
    }
}

/// Which parameters a finished run returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// The epoch with the lowest holdout NLL.
    #[default]
    BestValidation,
    /// The last epoch; the holdout curve is still recorded.
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Fraction of samples held out for validation.
    pub holdout: f64,
    pub schedule: Schedule,
    pub selection: Selection,
    /// Stop after this many epochs without a validation improvement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 512,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            holdout: 0.1,
            patience: None,
            schedule: Schedule::Constant,
            selection: Selection::BestValidation,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter("learning_rate must be positive".into()));
        }
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !unit(self.beta1) || !unit(self.beta2) || !unit(self.holdout) {
            return Err(Error::Parameter(
                "beta1, beta2 and holdout must lie in [0, 1)".into(),
            ));
        }
        if self.patience == Some(0) {
            return Err(Error::Parameter("patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean NLL per point over the epoch's minibatches.
    pub train_nll: f64,
    pub validation_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub best_epoch: usize,
    pub best_validation_nll: f64,
    pub curve: Vec<EpochStats>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
}

impl Adam {
    const EPS: f64 = 1e-8;

    fn new(n: usize, config: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn gather(points: &[f64], dim: usize, idx: &[usize], out: &mut Vec<f64>) {
    out.clear();
    for &i in idx {
        out.extend_from_slice(&points[i * dim..(i + 1) * dim]);
    }
}

/// Fits `arch` to row-major `samples` and returns the parameters with the
/// lowest validation NLL. Deterministic given `config.seed`.
pub fn train_flow(
    samples: &[f64],
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<(FlowModel, TrainReport)> {
    config.validate()?;
    arch.validate()?;
    let dim = arch.dim();
    if samples.is_empty() || !samples.len().is_multiple_of(dim) {
        return Err(Error::Parameter(format!(
            "expected a non-empty row-major array of {dim}-vectors"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("training samples must be finite".into()));
    }
    let n = samples.len() / dim;
    let standardization = Standardization::fit(samples, dim)?;
    let mut data = samples.to_vec();
    standardization.clip(&mut data);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * config.holdout).round() as usize).min(n - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut val = Vec::new();
    gather(&data, dim, val_idx, &mut val);

    let mut model = FlowModel::init(arch.clone(), &mut rng)?;
    model.standardization = standardization;
    let mut adam = Adam::new(model.params.len(), config);
    let mut grad = vec![0.0; model.params.len()];
    let mut batch = Vec::with_capacity(config.batch_size * dim);

    let batches_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let mut best = model.params.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::INFINITY;
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in train_idx.chunks(config.batch_size).enumerate() {
            gather(&data, dim, idx, &mut batch);
            grad.fill(0.0);
            let loss = model.nll_accumulate(&batch, &mut grad);
            let scale = 1.0 / idx.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { epoch, batch: b });
            }
            epoch_loss += loss;
            let progress = (epoch * batches_per_epoch + b) as f64 / total_steps as f64;
            adam.lr = config.learning_rate * config.schedule.factor(progress);
            adam.step(&mut model.params, &grad);
        }
        let train_nll = epoch_loss / train_idx.len() as f64;
        // Without a holdout the training loss stands in for validation.
        let validation_nll = if val.is_empty() {
            train_nll
        } else {
            model.nll(&val) / n_val as f64
        };
        if !validation_nll.is_finite() {
            return Err(Error::Training { epoch, batch: 0 });
        }
        curve.push(EpochStats {
            epoch,
            train_nll,
            validation_nll,
        });
        if validation_nll < best_val {
            best_val = validation_nll;
            best_epoch = epoch;
            best.copy_from_slice(&model.params);
        } else if config.patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }
    if config.selection == Selection::BestValidation {
        model.params = best;
    }
    Ok((
        model,
        TrainReport {
            best_epoch,
            best_validation_nll: best_val,
            curve,
        },
    ))
}
