use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{softmax, softmax_cce, Mode};
use crate::model::{Network, ParamStore};
use crate::train::{adam_step, batch_plan, lr_at, EpochRecord, Samples, TrainConfig, TrainHistory};

/// Mean loss, accuracy and per-sample class probabilities over a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub probs: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
}

impl Evaluation {
    pub fn predictions(&self) -> Vec<usize> {
        self.probs.iter().map(|p| argmax(p)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub optimizer_steps: u64,
}

fn argmax(row: &[f32]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Inference-mode softmax probabilities for every sample, in order.
pub fn predict_probs(
    net: &Network,
    params: &ParamStore<f32>,
    data: &dyn Samples,
    batch_size: usize,
) -> Result<Vec<Vec<f32>>> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, _) = data.batch(chunk)?;
        let probs = softmax(&net.predict(params, &x)?);
        let k = probs.shape().item_len();
        out.extend(probs.data().chunks_exact(k).map(|r| r.to_vec()));
    }
    Ok(out)
}

pub fn evaluate(net: &Network, params: &ParamStore<f32>, data: &dyn Samples, batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let probs = predict_probs(net, params, data, batch_size)?;
    let labels: Vec<usize> = (0..data.len()).map(|i| data.label(i)).collect();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (p, &y) in probs.iter().zip(&labels) {
        loss -= (p[y] as f64).max(f64::MIN_POSITIVE).ln();
        correct += usize::from(argmax(p) == y);
    }
    let n = labels.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
        probs,
        labels,
    })
}

/// Runs `cfg.epochs` epochs of Adam on `train_set`, evaluating `val_set`
/// after each. `on_epoch` sees each record with the current weights.
pub fn train(
    net: &Network,
    params: &mut ParamStore<f32>,
    train_set: &dyn Samples,
    val_set: &dyn Samples,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &ParamStore<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let classes = net.config().num_classes;
    for i in 0..train_set.len() {
        let label = train_set.label(i);
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let plan = batch_plan(order.len(), cfg.batch_size);
    let mut history = TrainHistory::default();
    let mut t = 0u64;

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for (step, range) in plan.iter().enumerate() {
            let (x, labels) = train_set.batch(&order[range.clone()])?;
            let cache = net.forward(params, &x, Mode::Train)?;
            net.commit_running_stats(params, &cache);
            let out = softmax_cce(cache.logits(), &labels)?;
            let loss = out.loss as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step + 1,
                    loss,
                });
            }
            loss_sum += loss * labels.len() as f64;
            let k = out.probs.shape().item_len();
            correct += out
                .probs
                .data()
                .chunks_exact(k)
                .zip(&labels)
                .filter(|(p, &y)| argmax(p) == y)
                .count();
            net.backward(params, cache, &out.grad_logits)?;
            t += 1;
            let lr = lr_at(epoch, (step + 1) as f64 / plan.len() as f64, cfg)?;
            adam_step(params, lr, t, cfg)?;
        }
        let val = evaluate(net, params, val_set, cfg.batch_size)?;
        let n = train_set.len() as f64;
        let record = EpochRecord {
            epoch,
            lr: lr_at(epoch, 1.0, cfg)?,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss: val.loss,
            val_acc: val.accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record, params)?;
        history.records.push(record);
    }
    Ok(TrainOutcome {
        history,
        optimizer_steps: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, ModelConfig};
    use crate::tensor::{Shape, Tensor};
    use crate::train::InMemoryDataset;

    fn toy(n: usize, side: usize) -> InMemoryDataset {
        let items = (0..n)
            .map(|i| Tensor::from_fn(Shape::new(1, side, side, 3), |_, y, x, c| ((i + y + x + c) % 5) as f32 / 5.0))
            .collect();
        InMemoryDataset::new(items, (0..n).map(|i| i % 2).collect()).unwrap()
    }

    #[test]
    fn runs_every_epoch_and_counts_steps() {
        let cfg = ModelConfig::scaled(3, 2, (2, 3), 8, 2).unwrap();
        let (net, mut params) = build_model::<f32>(&cfg, 1).unwrap();
        let tc = TrainConfig {
            epochs: 3,
            lr_hold_epochs: 1,
            ..TrainConfig::default()
        };
        let data = toy(17, 8);
        let mut seen = Vec::new();
        let out = train(&net, &mut params, &data, &toy(4, 8), &tc, |r, _| {
            seen.push(r.epoch);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![1, 2, 3]);
        assert_eq!(out.history.len(), 3);
        // 17 = 8 + 8 + 1, the trailing single sample joins the second batch
        assert_eq!(out.optimizer_steps, 3 * 2);
        assert!(out.history.records.iter().all(|r| r.seconds > 0.0));
        assert_eq!(out.history.records[2].lr, lr_at(3, 1.0, &tc).unwrap());
    }

    #[test]
    fn empty_splits_are_rejected() {
        let cfg = ModelConfig::scaled(3, 2, (2, 3), 8, 2).unwrap();
        let (net, mut params) = build_model::<f32>(&cfg, 1).unwrap();
        let empty = InMemoryDataset::new(Vec::new(), Vec::new()).unwrap();
        let tc = TrainConfig::default();
        let err = train(&net, &mut params, &empty, &toy(2, 8), &tc, |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::EmptySplit("train")));
        let err = train(&net, &mut params, &toy(2, 8), &empty, &tc, |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::EmptySplit("validation")));
    }
}
