use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backprop::{loss_and_grads_gated, predict_logits, Batch};
use super::forward::argmax;
use super::model::{init_model, ModelConfig, ModelParams};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Cosine-annealed learning rate: `0.5 · lr0 · (1 + cos(π · step / total))`.
pub fn cosine_lr(step: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("cosine_lr: total steps must be positive"));
    }
    if step > total {
        return Err(Error::invalid(format!("cosine_lr: step {step} beyond total {total}")));
    }
    Ok(0.5 * lr0 * (1.0 + (PI * step as f64 / total as f64).cos()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Classical momentum coefficient; 0 gives plain SGD.
    pub momentum: f64,
    /// Drives batch shuffling and stochastic-depth draws.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 128,
            lr0: 0.1,
            momentum: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        // lr0 = 0 is accepted: it freezes the parameters, which is useful as
        // a control run.
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::invalid("lr0 must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used by the last step of the epoch.
    pub lr: f64,
    /// Mean of the per-batch objective values seen during the epoch.
    pub loss: f64,
    /// Evaluation-mode accuracy on the whole training set after the epoch.
    pub train_accuracy: f64,
}

/// Trains a freshly initialized model.
pub fn train(cfg: &ModelConfig, tcfg: &TrainConfig, ds: &LabeledDataset) -> Result<(ModelParams, Vec<EpochRecord>)> {
    let params = init_model(cfg)?;
    train_from(params, cfg, tcfg, ds)
}

/// Mini-batch SGD from the given parameters.
///
/// Batches are reshuffled every epoch, the learning rate follows
/// [`cosine_lr`] per step, and weight decay enters through the gradient. With
/// `stochastic_depth_p > 0` every residual branch is dropped independently
/// per batch.
pub fn train_from(
    mut params: ModelParams,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    ds: &LabeledDataset,
) -> Result<(ModelParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    tcfg.validate()?;
    if ds.class_count != cfg.classes {
        return Err(Error::invalid(format!(
            "dataset has {} classes, model expects {}",
            ds.class_count, cfg.classes
        )));
    }
    if ds.inputs.cols() != cfg.input_dim {
        return Err(Error::invalid(format!(
            "dataset inputs have {} features, model expects {}",
            ds.inputs.cols(),
            cfg.input_dim
        )));
    }
    if !params.matches(cfg) {
        return Err(Error::invalid("parameters do not match the model configuration"));
    }

    let n = ds.len();
    let steps_per_epoch = n.div_ceil(tcfg.batch_size);
    let total = tcfg.epochs * steps_per_epoch;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(tcfg.seed ^ 0x5eed_d409_0000_0001);
    let mut velocity = (tcfg.momentum > 0.0).then(|| params.zeros_like());
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(tcfg.epochs);
    let mut step = 0usize;

    for epoch in 0..tcfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for (index, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let (inputs, labels) = gather(ds, chunk);
            let gates: Vec<f64> = (0..cfg.blocks)
                .map(|_| {
                    if cfg.stochastic_depth_p > 0.0 && drop_rng.random::<f64>() < cfg.stochastic_depth_p {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect();
            let batch = Batch {
                index,
                inputs: &inputs,
                labels: &labels,
            };
            let (loss, grads) = match loss_and_grads_gated(&params, cfg, batch, &gates) {
                Ok(v) => v,
                Err(Error::NonFiniteLoss { .. }) => {
                    return Err(Error::Diverged {
                        epoch,
                        step,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            lr = cosine_lr(step, total, tcfg.lr0)?;
            match velocity.as_mut() {
                Some(v) => {
                    let mut next = v.clone();
                    next.for_each_tensor_mut(|t| t.iter_mut().for_each(|x| *x *= tcfg.momentum));
                    next.axpy(1.0, &grads);
                    params.axpy(-lr, &next);
                    *v = next;
                }
                None => params.axpy(-lr, &grads),
            }
            if !params.is_finite() {
                return Err(Error::Diverged { epoch, step, loss });
            }
            loss_sum += loss;
            step += 1;
        }
        history.push(EpochRecord {
            epoch,
            lr,
            loss: loss_sum / steps_per_epoch as f64,
            train_accuracy: accuracy(&params, cfg, ds)?,
        });
    }
    Ok((params, history))
}

/// Fraction of samples whose argmax logit equals the label (evaluation mode).
pub fn accuracy(params: &ModelParams, cfg: &ModelConfig, ds: &LabeledDataset) -> Result<f64> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(512) {
        let (inputs, labels) = gather(ds, chunk);
        let logits = predict_logits(params, cfg, &inputs)?;
        correct += labels
            .iter()
            .enumerate()
            .filter(|(r, l)| argmax(logits.row(*r)) == **l)
            .count();
    }
    Ok(correct as f64 / ds.len() as f64)
}

fn gather(ds: &LabeledDataset, rows: &[usize]) -> (DenseMatrix, Vec<usize>) {
    let d = ds.inputs.cols();
    let mut data = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        data.extend_from_slice(ds.inputs.row(r));
    }
    let labels = rows.iter().map(|&r| ds.labels[r]).collect();
    (DenseMatrix::from_vec_unchecked(rows.len(), d, data), labels)
}
