use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{lr_at_epoch, TrainConfig};
use super::optim::{sgd_momentum_step, zero_velocity};
use crate::data::{augment, Dataset};
use crate::error::{invalid, Error, Result};
use crate::nn::{seeded_rng, softmax, Network};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Batch size used for inference passes over a dataset.
pub const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// Columns: epoch, lr, train_loss, test_acc (empty when no test set).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "lr", "train_loss", "test_acc"])?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.lr.to_string(),
                r.train_loss.to_string(),
                r.test_acc.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(Error::from)
    }

    pub fn final_test_acc(&self) -> Option<f64> {
        self.epochs.last().and_then(|r| r.test_acc)
    }
}

fn non_finite<T: Scalar>(net: &Network<T>, x: &Tensor<T>, epoch: usize, step: usize) -> Error {
    let layer = net
        .first_non_finite_layer(x)
        .or_else(|| {
            net.layers
                .iter()
                .find(|l| match &l.layer {
                    crate::nn::Layer::Conv2d(c) => !c.weight.all_finite() || !c.bias.all_finite(),
                    crate::nn::Layer::BatchNorm(b) => !b.gamma.all_finite() || !b.beta.all_finite(),
                    crate::nn::Layer::Dense(d) => !d.weight.all_finite() || !d.bias.all_finite(),
                    _ => false,
                })
                .map(|l| l.name.clone())
        })
        .unwrap_or_else(|| "loss".to_string());
    Error::NonFinite { epoch, step, layer }
}

/// Mini-batch SGD with momentum, the step learning-rate schedule and
/// augmentation. Batches are drawn from a fresh permutation every epoch; the
/// last batch of an epoch may be smaller. All randomness comes from
/// `cfg.seed`, so equal seeds give identical parameters.
pub fn train<T: Scalar>(net: &mut Network<T>, train_set: &Dataset, test_set: Option<&Dataset>, cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut velocity = zero_velocity(&net.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(cfg, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = train_set.batch::<T>(chunk)?;
            let x = augment(&x, &cfg.augmentation, &mut rng)?;
            let (loss, grads) = net.loss_and_grads(&x, &labels)?;
            if !loss.is_finite() || grads.params.iter().any(|g| !g.all_finite()) {
                return Err(non_finite(net, &x, epoch, step));
            }
            sgd_momentum_step(&mut net.params_mut(), &grads.params, &mut velocity, T::lit(lr), T::lit(cfg.momentum))?;
            loss_sum += loss.to_f64_lossy() * chunk.len() as f64;
            step += 1;
        }
        let test_acc = test_set.map(|t| evaluate(net, t)).transpose()?;
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            test_acc,
        });
    }
    Ok(history)
}

/// Class probabilities for every image, computed in fixed-size batches.
pub fn predict_dataset<T: Scalar>(net: &Network<T>, data: &Dataset, batch: usize) -> Result<Tensor<T>> {
    let mut parts = Vec::new();
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, _) = data.batch::<T>(chunk)?;
        parts.push(softmax(&net.logits(&x)?)?);
    }
    Tensor::concat(&parts)
}

/// Top-1 accuracy with inference-mode batchnorm.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset) -> Result<f64> {
    evaluate_batched(net, data, EVAL_BATCH)
}

pub fn evaluate_batched<T: Scalar>(net: &Network<T>, data: &Dataset, batch: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("cannot evaluate on an empty dataset"));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(batch.max(1)) {
        let (x, labels) = data.batch::<T>(chunk)?;
        let pred = net.logits(&x)?.argmax_rows();
        correct += pred.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / data.len() as f64)
}
