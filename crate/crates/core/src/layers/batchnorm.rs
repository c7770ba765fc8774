use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::real::Real;
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Owned batch-norm state. `gamma`/`beta` are trainable; the running
/// statistics are not.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNormParams<T> {
    pub fn new(c: usize) -> Self {
        BatchNormParams {
            gamma: vec![T::one(); c],
            beta: vec![T::zero(); c],
            running_mean: vec![T::zero(); c],
            running_var: vec![T::one(); c],
        }
    }

    pub fn trainable_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub channels: usize,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Values retained by the forward pass for backward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub mode: Mode,
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    /// Batch mean and (biased) variance; empty in infer mode.
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }

    fn check(&self, x: &Tensor<impl Real>) -> Result<()> {
        if x.shape().c != self.channels {
            return Err(Error::ChannelMismatch {
                op: "batchnorm",
                expected: self.channels,
                got: x.shape().c,
            });
        }
        Ok(())
    }

    /// Normalizes per channel over `(n, h, w)`. Train mode uses batch
    /// statistics; infer mode uses the running statistics.
    pub fn forward<T: Real>(
        &self,
        x: &Tensor<T>,
        gamma: &[T],
        beta: &[T],
        running_mean: &[T],
        running_var: &[T],
        mode: Mode,
    ) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        self.check(x)?;
        let c = self.channels;
        let eps = T::of(self.epsilon);
        let (mean, var) = match mode {
            Mode::Train => {
                let count = T::of((x.shape().len() / c) as f64);
                let mut mean = vec![T::zero(); c];
                for px in x.data().chunks_exact(c) {
                    for (m, &v) in mean.iter_mut().zip(px) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                let mut var = vec![T::zero(); c];
                for px in x.data().chunks_exact(c) {
                    for ((s, &v), &m) in var.iter_mut().zip(px).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= count);
                (mean, var)
            }
            Mode::Infer => (running_mean.to_vec(), running_var.to_vec()),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let x_hat = Tensor::from_fn(x.shape(), |n, y, xx, ch| {
            (x.at(n, y, xx, ch) - mean[ch]) * inv_std[ch]
        });
        let y = Tensor::from_fn(x.shape(), |n, yy, xx, ch| {
            gamma[ch] * x_hat.at(n, yy, xx, ch) + beta[ch]
        });
        y.debug_check_finite("batchnorm forward");
        let (batch_mean, batch_var) = match mode {
            Mode::Train => (mean, var),
            Mode::Infer => (Vec::new(), Vec::new()),
        };
        Ok((
            y,
            BatchNormCache {
                mode,
                x_hat,
                inv_std,
                batch_mean,
                batch_var,
            },
        ))
    }

    /// `running ← momentum·running + (1 − momentum)·batch`
    pub fn update_running<T: Real>(
        &self,
        cache: &BatchNormCache<T>,
        running_mean: &mut [T],
        running_var: &mut [T],
    ) {
        if cache.mode != Mode::Train {
            return;
        }
        let mom = T::of(self.momentum);
        let rest = T::one() - mom;
        for (r, &b) in running_mean.iter_mut().zip(&cache.batch_mean) {
            *r = mom * *r + rest * b;
        }
        for (r, &b) in running_var.iter_mut().zip(&cache.batch_var) {
            *r = mom * *r + rest * b;
        }
    }

    pub fn backward<T: Real>(
        &self,
        cache: &BatchNormCache<T>,
        gamma: &[T],
        grad_out: &Tensor<T>,
    ) -> Result<BatchNormGrads<T>> {
        grad_out.shape().expect_eq(&cache.x_hat.shape(), "batchnorm backward")?;
        let c = self.channels;
        let mut g_gamma = vec![T::zero(); c];
        let mut g_beta = vec![T::zero(); c];
        for (g, xh) in grad_out.data().chunks_exact(c).zip(cache.x_hat.data().chunks_exact(c)) {
            for ch in 0..c {
                g_beta[ch] += g[ch];
                g_gamma[ch] += g[ch] * xh[ch];
            }
        }
        let input = match cache.mode {
            Mode::Infer => Tensor::from_fn(grad_out.shape(), |n, y, x, ch| {
                grad_out.at(n, y, x, ch) * gamma[ch] * cache.inv_std[ch]
            }),
            Mode::Train => {
                let m = T::of((grad_out.shape().len() / c) as f64);
                Tensor::from_fn(grad_out.shape(), |n, y, x, ch| {
                    let scale = gamma[ch] * cache.inv_std[ch] / m;
                    scale
                        * (m * grad_out.at(n, y, x, ch)
                            - g_beta[ch]
                            - cache.x_hat.at(n, y, x, ch) * g_gamma[ch])
                })
            }
        };
        Ok(BatchNormGrads {
            input,
            gamma: g_gamma,
            beta: g_beta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn constant_input_normalizes_to_zero() {
        let bn = BatchNorm::new(2);
        let p = BatchNormParams::<f64>::new(2);
        let x = Tensor::filled(Shape::new(4, 3, 3, 2), 7.5);
        let (y, _) = bn
            .forward(&x, &p.gamma, &p.beta, &p.running_mean, &p.running_var, Mode::Train)
            .unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_gamma_emits_beta() {
        let bn = BatchNorm::new(3);
        let mut p = BatchNormParams::<f32>::new(3);
        p.gamma = vec![0.0; 3];
        p.beta = vec![0.5, -1.0, 2.0];
        let x = Tensor::from_fn(Shape::new(2, 2, 2, 3), |n, y, x, c| (n + y * 2 + x + c) as f32);
        for mode in [Mode::Train, Mode::Infer] {
            let (y, _) = bn
                .forward(&x, &p.gamma, &p.beta, &p.running_mean, &p.running_var, mode)
                .unwrap();
            for px in y.data().chunks_exact(3) {
                assert_eq!(px, &p.beta[..]);
            }
        }
    }

    #[test]
    fn running_stats_follow_momentum() {
        let bn = BatchNorm::new(1);
        let mut p = BatchNormParams::<f64>::new(1);
        let x = Tensor::from_vec(Shape::new(2, 1, 1, 1), vec![1.0, 3.0]).unwrap();
        let (_, cache) = bn
            .forward(&x, &p.gamma, &p.beta, &p.running_mean, &p.running_var, Mode::Train)
            .unwrap();
        bn.update_running(&cache, &mut p.running_mean, &mut p.running_var);
        assert!((p.running_mean[0] - 0.02).abs() < 1e-15);
        assert!((p.running_var[0] - (0.99 + 0.01)).abs() < 1e-15);
        assert!(p.running_var[0] >= 0.0);
        assert_eq!(p.trainable_count(), 2);
    }

    #[test]
    fn channel_mismatch() {
        let bn = BatchNorm::new(2);
        let p = BatchNormParams::<f32>::new(2);
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 1, 3));
        assert!(bn
            .forward(&x, &p.gamma, &p.beta, &p.running_mean, &p.running_var, Mode::Infer)
            .is_err());
    }
}
