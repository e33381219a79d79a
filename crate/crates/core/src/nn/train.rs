//! Mini-batch SGD with a multi-step learning-rate schedule, optional L2
//! weight penalty and early stopping on the plain validation loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Layer, MlpModel};
use crate::data::Dataset;
use crate::flood::Objective;
use crate::metrics;
use crate::rng::{rng_for, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_step_epochs: usize,
    pub l2_weight: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr0: 0.1,
            lr_decay: 0.2,
            lr_step_epochs: 60,
            l2_weight: 0.0,
            early_stop_patience: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if self.lr_step_epochs == 0 {
            return Err(Error::Config("lr_step_epochs must be positive".into()));
        }
        if !(self.l2_weight.is_finite() && self.l2_weight >= 0.0) {
            return Err(Error::Config("l2_weight must be nonnegative".into()));
        }
        Ok(())
    }

    /// `lr0 * lr_decay^floor(epoch / lr_step_epochs)` with 0-based epochs.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi((epoch / self.lr_step_epochs) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Batch-size weighted mean of the training objective.
    pub train_objective: f64,
    /// Mean unregularized per-sample loss seen during the epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned when early stopping is on.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub log: TrainLog,
}

/// Flags for the layers that get re-initialized and trained during
/// fine-tuning. Flagged layers must form a non-empty suffix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMask(Vec<bool>);

impl LayerMask {
    pub fn new(flags: Vec<bool>) -> Result<Self> {
        let mask = Self(flags);
        mask.check()?;
        Ok(mask)
    }

    /// Flags the last `k` of `num_layers` layers.
    pub fn last(num_layers: usize, k: usize) -> Result<Self> {
        Self::new((0..num_layers).map(|i| i + k >= num_layers).collect())
    }

    fn check(&self) -> Result<()> {
        let first = self
            .0
            .iter()
            .position(|&f| f)
            .ok_or_else(|| Error::Config("layer mask must flag at least one layer".into()))?;
        if !self.0[first..].iter().all(|&f| f) {
            return Err(Error::Config("flagged layers must be the last layers".into()));
        }
        Ok(())
    }

    pub fn validate_for(&self, model: &MlpModel) -> Result<()> {
        self.check()?;
        if self.0.len() != model.num_layers() {
            return Err(Error::Config(format!(
                "mask covers {} layers, model has {}",
                self.0.len(),
                model.num_layers()
            )));
        }
        Ok(())
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    pub fn first_trainable(&self) -> usize {
        self.0.iter().position(|&f| f).unwrap_or(self.0.len())
    }

    pub fn trainable_count(&self) -> usize {
        self.0.iter().filter(|&&f| f).count()
    }
}

/// Mean plain loss and, for classifiers, accuracy.
pub fn evaluate(model: &MlpModel, data: &Dataset) -> Result<(f64, Option<f64>)> {
    let out = model.forward(data.features())?;
    let losses = model.per_sample_losses(&out, data.labels())?;
    let mean = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
    let acc = match data.labels().classes() {
        Some(y) => Some(metrics::accuracy(&out, y)?),
        None => None,
    };
    Ok((mean, acc))
}

pub fn train(
    model: MlpModel,
    data: &Dataset,
    cfg: &TrainConfig,
    objective: &Objective<'_>,
    val: Option<&Dataset>,
) -> Result<TrainOutcome> {
    train_observed(model, data, cfg, objective, val, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch with the current
/// parameters.
pub fn train_observed<F>(
    mut model: MlpModel,
    data: &Dataset,
    cfg: &TrainConfig,
    objective: &Objective<'_>,
    val: Option<&Dataset>,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &MlpModel),
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if data.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "dataset has {} features, model expects {}",
            data.dim(),
            model.input_dim()
        )));
    }
    let val = val.filter(|v| !v.is_empty());
    let early_stopping = cfg.early_stop_patience > 0;
    if early_stopping && val.is_none() {
        return Err(Error::Config(
            "early stopping needs a non-empty validation set".into(),
        ));
    }
    if let Objective::AdaFlood(table) = objective {
        table.check_covers(data.ids())?;
    }

    let n = data.len();
    let mut rng = rng_for(cfg.seed, stream::SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut obj_sum = 0.0;
        let mut loss_sum = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let x = data.features().select_rows(batch);
            let y = data.labels().select(batch);
            let ids: Vec<u64> = batch.iter().map(|&i| data.ids()[i]).collect();
            let cache = model.forward_cached(&x)?;
            let losses = model.per_sample_losses(&cache.output, &y)?;
            if let Some(bad) = losses.iter().find(|l| !l.is_finite()) {
                let reason = format!("non-finite loss {bad}");
                log.failure = Some(reason.clone());
                return Err(Error::Diverged {
                    epoch,
                    reason,
                    log: Box::new(log),
                });
            }
            let obj = objective.evaluate(&losses, &ids)?;
            let grads = model.backward(&x, &cache, &y, &obj.upstream, cfg.l2_weight)?;
            model.apply_gradients(&grads, lr);
            obj_sum += obj.value * batch.len() as f64;
            loss_sum += losses.iter().sum::<f64>();
        }

        if model.flat_params().iter().any(|p| !p.is_finite()) {
            let reason = "non-finite parameters after update".to_owned();
            log.failure = Some(reason.clone());
            return Err(Error::Diverged {
                epoch,
                reason,
                log: Box::new(log),
            });
        }

        let (val_loss, val_accuracy) = match val {
            Some(v) => {
                let (l, a) = evaluate(&model, v)?;
                (Some(l), a)
            }
            None => (None, None),
        };
        log.epochs.push(EpochRecord {
            epoch,
            lr,
            train_objective: obj_sum / n as f64,
            train_loss: loss_sum / n as f64,
            val_loss,
            val_accuracy,
        });
        observer(epoch, &model);

        if early_stopping {
            let vl = val_loss.expect("validation present");
            if !vl.is_finite() {
                let reason = format!("non-finite validation loss {vl}");
                log.failure = Some(reason.clone());
                return Err(Error::Diverged {
                    epoch,
                    reason,
                    log: Box::new(log),
                });
            }
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, epoch, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.early_stop_patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }

    if let Some((_, epoch, best_model)) = best {
        log.best_epoch = Some(epoch);
        model = best_model;
    }
    Ok(TrainOutcome { model, log })
}

/// Re-initializes the masked suffix of `base` and trains only that suffix
/// on `data` with the plain loss. Unmasked layers are copied bit-for-bit.
///
/// The frozen prefix is evaluated once per dataset and cached, so each
/// fine-tuning step only pays for the trainable layers.
pub fn reinit_and_finetune(
    base: &MlpModel,
    mask: &LayerMask,
    data: &Dataset,
    cfg: &TrainConfig,
    val: Option<&Dataset>,
) -> Result<TrainOutcome> {
    mask.validate_for(base)?;
    let first = mask.first_trainable();
    let mut rng = rng_for(cfg.seed, stream::REINIT);
    let suffix: Vec<Layer> = base.layers()[first..]
        .iter()
        .map(|l| Layer::he_uniform(l.in_dim, l.out_dim, &mut rng))
        .collect();
    let suffix_model = MlpModel::from_layers(suffix, base.head(), cfg.seed)?;

    let cached = |d: &Dataset| -> Result<Dataset> {
        if first == 0 {
            Ok(d.clone())
        } else {
            d.with_features(base.forward_prefix(d.features(), first)?)
        }
    };
    let data_feat = cached(data)?;
    let val_feat = val.map(cached).transpose()?;
    let out = train(
        suffix_model,
        &data_feat,
        cfg,
        &Objective::Unregularized,
        val_feat.as_ref(),
    )?;

    let mut layers = base.layers()[..first].to_vec();
    layers.extend(out.model.layers().iter().cloned());
    let model = MlpModel::from_layers(layers, base.head(), base.seed())?;
    Ok(TrainOutcome { model, log: out.log })
}
