//! Mini-batch training with momentum SGD, early stopping and checkpoints.

mod checkpoint;
mod metrics;
mod sgd;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader,
    MAGIC, VERSION,
};
pub use metrics::{write_metrics_csv, MetricsRecord, METRICS_HEADER};
pub use sgd::{sgd_step, Sgd};

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::PreparedSet;
use crate::error::{Error, Result};
use crate::loss::{multi_head_loss, FocalLossConfig};
use crate::model::Model;
use crate::nn::Mode;
use crate::rng::{Rng, RngState, Stream};

/// Minimum absolute accuracy gain that counts as an improvement.
pub const IMPROVEMENT_THRESHOLD: f32 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    pub patience: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub early_stopping: bool,
    /// Stop as soon as evaluation accuracy reaches this value.
    pub target_accuracy: Option<f32>,
    /// Measure wall time per epoch. Off by default so metrics stay
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            patience: 5,
            seed: 0,
            eval_every: 1,
            early_stopping: true,
            target_accuracy: None,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::config(
                "epochs, batch_size and eval_every must be positive",
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate {} is invalid",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        Ok(())
    }
}

/// True when none of the last `patience` values improves on the best value
/// seen before them by more than [`IMPROVEMENT_THRESHOLD`].
pub fn early_stop(history: &[f32], patience: usize) -> bool {
    if patience == 0 || history.len() <= patience {
        return false;
    }
    let (before, recent) = history.split_at(history.len() - patience);
    let best = before.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    recent.iter().all(|&v| v <= best + IMPROVEMENT_THRESHOLD)
}

/// Main-head top-1 accuracy in eval mode.
pub fn evaluate(model: &Model, set: &PreparedSet, batch_size: usize) -> Result<f32> {
    if set.is_empty() {
        return Err(Error::config("cannot evaluate on an empty dataset"));
    }
    let positions: Vec<usize> = (0..set.len()).collect();
    let mut correct = 0;
    for chunk in positions.chunks(batch_size.max(1)) {
        let (x, labels) = set.batch(chunk)?;
        let logits = model.infer_main(&x)?;
        for (i, &y) in labels.iter().enumerate() {
            if argmax(logits.row(i)) == y {
                correct += 1;
            }
        }
    }
    Ok(correct as f32 / set.len() as f32)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<MetricsRecord>,
    /// Epoch whose parameters the model holds on return (0 = initial).
    pub best_epoch: usize,
    pub best_test_top1: Option<f32>,
    pub stopped_early: bool,
    /// Generator position after the final epoch.
    pub rng: RngState,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

/// Trains `model` on `train_set`, evaluating on `test_set`. On return the
/// model holds the parameters of the best evaluated epoch (the final ones if
/// no evaluation ran). `on_epoch` sees every record as it is produced.
pub fn train(
    model: &mut Model,
    train_set: &PreparedSet,
    test_set: Option<&PreparedSet>,
    loss: &FocalLossConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&MetricsRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    loss.validate(model.spec().num_classes)?;
    if train_set.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    for set in std::iter::once(train_set).chain(test_set) {
        if set.side() != model.spec().input_side {
            return Err(Error::config(format!(
                "images are {}px but the model expects {}px",
                set.side(),
                model.spec().input_side
            )));
        }
    }
    let root = Rng::new(config.seed);
    let mut opt = Sgd::new(config.learning_rate, config.momentum);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut accuracies = Vec::new();
    let mut best: Option<(f32, usize, Vec<crate::tensor::Tensor>)> = None;
    let mut stopped_early = false;
    let mut rng = root.clone();

    for epoch in 1..=config.epochs {
        let start = config.record_wall_time.then(Instant::now);
        order.shuffle(&mut root.keyed(Stream::Shuffle, epoch as u32));
        rng = root.keyed(Stream::Dropout, epoch as u32);
        let num_heads = model.spec().num_bricks;
        let mut head_sums = vec![0.0f64; num_heads];
        let mut total_sum = 0.0f64;
        let mut seen = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            // batch norm needs two values per channel
            if chunk.len() < 2 {
                continue;
            }
            let (x, labels) = train_set.batch(chunk)?;
            model.zero_grad();
            let out = model.forward(&x, Mode::Train, &mut rng)?;
            let (report, grads) = multi_head_loss(&out, &labels, loss)?;
            if !report.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: report.total,
                });
            }
            model.backward(&grads)?;
            opt.step(model.params_mut().into_iter().map(|(_, p)| p))?;
            let n = chunk.len() as f64;
            total_sum += report.total as f64 * n;
            for (s, &l) in head_sums.iter_mut().zip(&report.per_head) {
                *s += l as f64 * n;
            }
            seen += chunk.len();
        }
        if seen == 0 {
            return Err(Error::config("no batch has at least two samples"));
        }
        let test_top1 = match test_set {
            Some(set) if epoch % config.eval_every == 0 || epoch == config.epochs => {
                Some(evaluate(model, set, config.batch_size)?)
            }
            _ => None,
        };
        let record = MetricsRecord {
            epoch,
            train_loss: (total_sum / seen as f64) as f32,
            per_head_losses: head_sums.iter().map(|s| (s / seen as f64) as f32).collect(),
            test_top1,
            wall_time_s: start.map_or(0.0, |s| s.elapsed().as_secs_f64()),
        };
        log::info!(
            "epoch {epoch}: loss {:.5} top1 {}",
            record.train_loss,
            record.test_top1.map_or("-".into(), |a| format!("{a:.4}"))
        );
        on_epoch(&record);
        history.push(record);

        if let Some(acc) = test_top1 {
            accuracies.push(acc);
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.snapshot()));
            }
            if config.target_accuracy.is_some_and(|t| acc >= t) {
                break;
            }
            if config.early_stopping && early_stop(&accuracies, config.patience) {
                stopped_early = true;
                break;
            }
        }
    }

    let last_epoch = history.len();
    let (best_epoch, best_test_top1) = match best {
        Some((acc, epoch, snapshot)) => {
            if epoch != last_epoch {
                model.restore(&snapshot)?;
            }
            (epoch, Some(acc))
        }
        None => (last_epoch, None),
    };
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_test_top1,
        stopped_early,
        rng: rng.state(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stop_traces() {
        let flat = [0.9f32; 6];
        assert!(!early_stop(&flat[..5], 5));
        assert!(early_stop(&flat, 5));
        let rising: Vec<f32> = (0..30).map(|i| 0.1 + 0.01 * i as f32).collect();
        assert!((1..=rising.len()).all(|n| !early_stop(&rising[..n], 5)));
        assert!(early_stop(&[0.5, 0.8, 0.79, 0.80, 0.795, 0.8, 0.8], 5));
    }

    #[test]
    fn improvement_must_clear_threshold() {
        assert!(early_stop(&[0.5, 0.50005, 0.5, 0.5, 0.5], 4));
        assert!(!early_stop(&[0.5, 0.5002, 0.5, 0.5, 0.5], 4));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
