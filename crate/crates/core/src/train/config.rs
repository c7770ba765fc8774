use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the decay factor is applied once per epoch or spread evenly
/// over the steps of each decaying epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayGranularity {
    #[default]
    PerEpoch,
    PerStep,
}

/// How a run ends. There is deliberately only one rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingRule {
    FixedEpochs(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_hold_epochs: usize,
    pub lr_decay: f64,
    #[serde(default)]
    pub decay_granularity: DecayGranularity,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            batch_size: 8,
            base_lr: 1e-4,
            lr_hold_epochs: 13,
            lr_decay: 0.9,
            decay_granularity: DecayGranularity::PerEpoch,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::TrainConfig(m));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size < 2 {
            return fail("batch_size must be >= 2 (batch norm needs two samples)".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return fail(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return fail(format!("lr_decay must be in (0,1), got {}", self.lr_decay));
        }
        if self.lr_hold_epochs > self.epochs {
            return fail(format!(
                "lr_hold_epochs ({}) exceeds epochs ({})",
                self.lr_hold_epochs, self.epochs
            ));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must be in [0,1), got {b}"));
            }
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return fail("adam_epsilon must be positive".into());
        }
        Ok(())
    }

    pub fn stopping_rule(&self) -> StoppingRule {
        StoppingRule::FixedEpochs(self.epochs)
    }
}

/// Learning rate for a 1-based epoch: `base_lr` for the hold epochs, then
/// `base_lr · decay^(epoch − hold)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    lr_at(epoch, 1.0, cfg)
}

/// Learning rate at fraction `progress ∈ (0, 1]` through `epoch`. Only
/// per-step decay looks at `progress`.
pub fn lr_at(epoch: usize, progress: f64, cfg: &TrainConfig) -> Result<f64> {
    if epoch == 0 || epoch > cfg.epochs {
        return Err(Error::OutOfRange {
            what: "epoch",
            value: epoch,
            min: 1,
            max: cfg.epochs,
        });
    }
    if epoch <= cfg.lr_hold_epochs {
        return Ok(cfg.base_lr);
    }
    let exponent = match cfg.decay_granularity {
        DecayGranularity::PerEpoch => (epoch - cfg.lr_hold_epochs) as f64,
        DecayGranularity::PerStep => (epoch - cfg.lr_hold_epochs - 1) as f64 + progress,
    };
    Ok(cfg.base_lr * cfg.lr_decay.powf(exponent))
}
