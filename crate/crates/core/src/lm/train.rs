use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::LanguageModel;
use super::optim::{Optimizer, OptimizerKind};
use super::scalar::Scalar;
use super::LmError;
use crate::preprocess::LogKeySequence;

fn default_lr() -> f64 {
    1e-3
}

fn default_batch() -> usize {
    8
}

fn default_epochs() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            seed: 0,
            optimizer: OptimizerKind::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(LmError::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(LmError::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Prediction-weighted mean loss over each epoch's batches, measured
    /// before each batch's update.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub sequences: usize,
    pub skipped_short: usize,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Fit the model to normal sequences with the next-key objective.
///
/// Sequences with fewer than two keys carry no prediction and are skipped.
/// Batch order is reshuffled every epoch from `cfg.seed`.
pub fn train<F: Scalar>(
    model: &mut LanguageModel<F>,
    corpus: &[LogKeySequence],
    cfg: &TrainConfig,
) -> Result<TrainReport, LmError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    if let Some(bad) = corpus.iter().find(|s| s.sequence_label()) {
        return Err(LmError::AnomalousTrainingSequence(bad.sequence_id().to_string()));
    }
    let usable: Vec<&[usize]> = corpus
        .iter()
        .map(|s| s.keys())
        .filter(|k| k.len() >= 2 && k[1..].iter().any(|&x| model.vocab().is_key(x)))
        .collect();
    let skipped_short = corpus.len() - usable.len();
    if usable.is_empty() {
        return Err(LmError::EmptyCorpus);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, model.params());
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[usize]> = chunk.iter().map(|&i| usable[i]).collect();
            let (loss, grads, n) = model.loss_and_grad(&batch)?;
            weighted += loss.to_f64().unwrap_or(f64::NAN) * n as f64;
            count += n;
            optimizer.step(model.params_mut(), &grads, cfg.learning_rate);
            steps += 1;
        }
        if !model.params().all_finite() {
            return Err(LmError::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let mean = weighted / count as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(TrainReport {
        epoch_losses,
        steps,
        sequences: usable.len(),
        skipped_short,
    })
}
