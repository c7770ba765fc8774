use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::real::Real;
use crate::train::TrainConfig;

/// One bias-corrected Adam update of every trainable entry, at 1-based
/// step `t`. Gradients are cleared afterwards.
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, lr: f64, t: u64, cfg: &TrainConfig) -> Result<()> {
    if t == 0 {
        return Err(Error::TrainConfig("adam step counter starts at 1".into()));
    }
    if let Some(e) = store.entries().iter().find(|e| e.trainable && !e.has_grad()) {
        return Err(Error::MissingGradient(e.name.clone()));
    }
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    let (b1t, b2t) = (T::of(b1), T::of(b2));
    let (one_b1, one_b2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    let (c1, c2) = (T::of(c1), T::of(c2));
    let (lr, eps) = (T::of(lr), T::of(cfg.adam_epsilon));

    for e in store.entries_mut().iter_mut().filter(|e| e.trainable) {
        for i in 0..e.values.len() {
            let g = e.grad[i];
            let m = b1t * e.adam_m[i] + one_b1 * g;
            let v = b2t * e.adam_v[i] + one_b2 * g * g;
            e.adam_m[i] = m;
            e.adam_v[i] = v;
            e.values[i] -= lr * (m / c1) / ((v / c2).sqrt() + eps);
        }
    }
    store.clear_grads();
    Ok(())
}
