use std::time::Instant;

use super::{adam_step, cross_entropy_per_row, softmax_cross_entropy, AdamState};
use crate::data::{batch_iter, Dataset};
use crate::error::{Error, Result};
use crate::model::{ForwardCache, Model};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Record wall-clock seconds per epoch; when off the column is 0 so
    /// repeated runs produce identical metrics.
    pub record_time: bool,
    /// Batch size used for evaluation passes.
    pub eval_batch: usize,
    /// Stop after the first epoch whose validation accuracy reaches this.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 40,
            lr: 1e-3,
            seed: 0,
            record_time: false,
            eval_batch: 250,
            target_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch == 0 {
            return Err(Error::Config("epochs and batch sizes must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.lr)));
        }
        if let Some(t) = self.target_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("target accuracy {t} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean minibatch loss over the epoch, measured before each update.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: Model,
    /// Optimiser state at that same epoch.
    pub optimizer: AdamState,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

fn check_compatible(model: &Model, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ds.dim != model.config.input_dim {
        return Err(Error::ChannelMismatch {
            expected: model.config.input_dim,
            actual: ds.dim,
        });
    }
    if ds.classes > model.config.classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, model only {}",
            ds.classes, model.config.classes
        )));
    }
    Ok(())
}

/// Accuracy (ties in argmax go to the lowest class) and mean loss, summed
/// in record order.
pub fn evaluate(model: &Model, ds: &Dataset) -> Result<Evaluation> {
    evaluate_batched(model, ds, 250)
}

fn evaluate_batched(model: &Model, ds: &Dataset, batch: usize) -> Result<Evaluation> {
    check_compatible(model, ds)?;
    let mut correct = 0usize;
    let mut loss = 0.0;
    for b in batch_iter(ds, batch, false, 0, 0) {
        let logits = model.forward(&b.inputs, false)?.logits;
        for (r, &label) in b.labels.iter().enumerate() {
            if logits.argmax_row(r) == label {
                correct += 1;
            }
        }
        for l in cross_entropy_per_row(&logits, &b.labels)? {
            loss += l;
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / ds.len() as f64,
        loss: loss / ds.len() as f64,
    })
}

pub fn fit(model: Model, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<FitOutcome> {
    fit_with(model, train, val, cfg, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    mut model: Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<FitOutcome> {
    cfg.validate()?;
    check_compatible(&model, train)?;
    check_compatible(&model, val)?;
    let mut optimizer = AdamState::for_params(&model.params(), cfg.lr);
    let mut cache = ForwardCache::default();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model, AdamState)> = None;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in batch_iter(train, cfg.batch_size, true, cfg.seed, epoch as u64) {
            let logits = model.forward_cached(&batch.inputs, &mut cache)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &batch.labels)?;
            loss_sum += loss * batch.labels.len() as f64;
            correct += batch
                .labels
                .iter()
                .enumerate()
                .filter(|(r, &l)| logits.argmax_row(*r) == l)
                .count();
            let grads = model.backward(&cache, &grad)?;
            adam_step(&mut model.params_mut(), &grads.params, &mut optimizer)?;
        }
        let val_eval = evaluate_batched(&model, val, cfg.eval_batch)?;
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss: val_eval.loss,
            val_accuracy: val_eval.accuracy,
            seconds: if cfg.record_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        on_epoch(&m);
        if best.as_ref().is_none_or(|(acc, ..)| m.val_accuracy > *acc) {
            best = Some((m.val_accuracy, epoch, model.clone(), optimizer.clone()));
        }
        let reached = cfg.target_accuracy.is_some_and(|t| m.val_accuracy >= t);
        metrics.push(m);
        if reached {
            break;
        }
    }
    let (_, best_epoch, model, optimizer) = best.expect("at least one epoch");
    Ok(FitOutcome {
        model,
        optimizer,
        best_epoch,
        metrics,
    })
}
