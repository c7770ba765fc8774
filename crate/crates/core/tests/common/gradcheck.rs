//! Finite-difference gradient checks in f64. Each layer check returns the
//! worst relative error over its random shapes.

use fibnet::layers::{
    avg2max_backward, avg2max_forward, global_avg_pool, global_avg_pool_backward, softmax_cce, BatchNorm, Conv2d,
    Dense, Dwsc, DwscParams, Mode, Pool2d,
};
use fibnet::model::{build_model, ModelConfig, Network, ParamStore};
use fibnet::{Padding, Shape, Tensor};
use rand::seq::SliceRandom;

use super::fd::{abs_err, all_indices, central_diff, rel_err, weighted_sum};
use super::{random_tensor, random_vec, rng};

pub const LAYER_TOL: f64 = 1e-5;
pub const MODEL_TOL: f64 = 1e-4;
/// Below this norm a gradient is treated as structurally zero (a conv bias
/// feeding a train-mode batch norm); relative error is meaningless there.
const ZERO_GRAD: f64 = 1e-8;

fn with_data(shape: Shape, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

fn shapes(seed: u64, count: usize) -> Vec<Shape> {
    use rand::Rng;
    let mut r = rng(seed);
    (0..count)
        .map(|_| Shape::new(r.gen_range(1..=3), r.gen_range(2..=7), r.gen_range(2..=7), r.gen_range(1..=4)))
        .collect()
}

pub fn conv2d() -> f64 {
    let mut worst = 0.0f64;
    for (i, s) in shapes(1, 6).into_iter().enumerate() {
        let mut r = rng(100 + i as u64);
        let layer = Conv2d {
            kernel: if i % 3 == 2 { 1 } else { 3 },
            in_c: s.c,
            out_c: 1 + i % 3,
            stride: 1 + i % 2,
            padding: if i == 4 && s.h >= 3 && s.w >= 3 {
                Padding::Valid
            } else {
                Padding::Same
            },
        };
        let x = random_tensor(&mut r, s, 1.0);
        let w = random_vec(&mut r, layer.weight_len(), 0.5);
        let b = random_vec(&mut r, layer.out_c, 0.5);
        let out_shape = layer.output_shape(s).unwrap();
        let probe = random_vec(&mut r, out_shape.len(), 1.0);
        let g = layer
            .backward(&x, &w, &with_data(out_shape, &probe))
            .unwrap();

        let fx = central_diff(x.data(), &all_indices(s.len()), |d| {
            weighted_sum(layer.forward(&with_data(s, d), &w, &b).unwrap().data(), &probe)
        });
        let fw = central_diff(&w, &all_indices(w.len()), |d| {
            weighted_sum(layer.forward(&x, d, &b).unwrap().data(), &probe)
        });
        let fb = central_diff(&b, &all_indices(b.len()), |d| {
            weighted_sum(layer.forward(&x, &w, d).unwrap().data(), &probe)
        });
        worst = worst.max(rel_err(g.input.data(), &fx));
        worst = worst.max(rel_err(&g.weights, &fw));
        worst = worst.max(rel_err(&g.bias, &fb));
    }
    worst
}

pub fn dwsc() -> f64 {
    let mut worst = 0.0f64;
    for (i, s) in shapes(2, 5).into_iter().enumerate() {
        let mut r = rng(200 + i as u64);
        let layer = Dwsc { in_c: s.c, out_c: 1 + i % 4 };
        let p = DwscParams {
            depthwise: random_vec(&mut r, 9 * s.c, 0.5),
            depthwise_bias: random_vec(&mut r, s.c, 0.5),
            pointwise: random_vec(&mut r, s.c * layer.out_c, 0.5),
            pointwise_bias: random_vec(&mut r, layer.out_c, 0.5),
        };
        let x = random_tensor(&mut r, s, 1.0);
        let out_shape = s.with_c(layer.out_c);
        let probe = random_vec(&mut r, out_shape.len(), 1.0);
        let (_, mid) = layer.forward(&x, &p).unwrap();
        let g = layer.backward(&x, &mid, &p, &with_data(out_shape, &probe)).unwrap();
        let loss = |x: &Tensor<f64>, p: &DwscParams<f64>| weighted_sum(layer.forward(x, p).unwrap().0.data(), &probe);

        let fx = central_diff(x.data(), &all_indices(s.len()), |d| loss(&with_data(s, d), &p));
        worst = worst.max(rel_err(g.input.data(), &fx));
        type Field = fn(&mut DwscParams<f64>) -> &mut Vec<f64>;
        let checks: [(&[f64], &[f64], Field); 4] = [
            (&p.depthwise, &g.depthwise, |q| &mut q.depthwise),
            (&p.depthwise_bias, &g.depthwise_bias, |q| &mut q.depthwise_bias),
            (&p.pointwise, &g.pointwise, |q| &mut q.pointwise),
            (&p.pointwise_bias, &g.pointwise_bias, |q| &mut q.pointwise_bias),
        ];
        for (vals, analytic, field) in checks {
            let numeric = central_diff(vals, &all_indices(vals.len()), |d| {
                let mut q = p.clone();
                *field(&mut q) = d.to_vec();
                loss(&x, &q)
            });
            worst = worst.max(rel_err(analytic, &numeric));
        }
    }
    worst
}

pub fn batchnorm(mode: Mode) -> f64 {
    let mut worst = 0.0f64;
    for (i, s) in shapes(3, 5).into_iter().enumerate() {
        let mut r = rng(300 + i as u64);
        let layer = BatchNorm::new(s.c);
        let x = random_tensor(&mut r, s, 2.0);
        let gamma: Vec<f64> = random_vec(&mut r, s.c, 1.0).iter().map(|v| v + 1.5).collect();
        let beta = random_vec(&mut r, s.c, 1.0);
        let rm = random_vec(&mut r, s.c, 0.5);
        let rv: Vec<f64> = random_vec(&mut r, s.c, 0.5).iter().map(|v| v + 1.0).collect();
        let probe = random_vec(&mut r, s.len(), 1.0);
        let fwd = |x: &Tensor<f64>, gamma: &[f64], beta: &[f64]| {
            weighted_sum(layer.forward(x, gamma, beta, &rm, &rv, mode).unwrap().0.data(), &probe)
        };
        let (_, cache) = layer.forward(&x, &gamma, &beta, &rm, &rv, mode).unwrap();
        let g = layer.backward(&cache, &gamma, &with_data(s, &probe)).unwrap();

        let fx = central_diff(x.data(), &all_indices(s.len()), |d| fwd(&with_data(s, d), &gamma, &beta));
        let fg = central_diff(&gamma, &all_indices(s.c), |d| fwd(&x, d, &beta));
        let fb = central_diff(&beta, &all_indices(s.c), |d| fwd(&x, &gamma, d));
        worst = worst.max(rel_err(g.input.data(), &fx));
        worst = worst.max(rel_err(&g.gamma, &fg));
        worst = worst.max(rel_err(&g.beta, &fb));
    }
    worst
}

pub fn max_pool() -> f64 {
    let mut worst = 0.0f64;
    for (i, s) in shapes(4, 6).into_iter().enumerate() {
        let mut r = rng(400 + i as u64);
        let pool = Pool2d::new(2 + i % 2, 2, Padding::Same);
        let x = random_tensor(&mut r, s, 1.0);
        let out_shape = pool.output_shape(s).unwrap();
        let probe = random_vec(&mut r, out_shape.len(), 1.0);
        let (_, arg) = pool.max_forward(&x).unwrap();
        let g = pool.max_backward(s, &arg, &with_data(out_shape, &probe)).unwrap();
        let fx = central_diff(x.data(), &all_indices(s.len()), |d| {
            weighted_sum(pool.max_forward(&with_data(s, d)).unwrap().0.data(), &probe)
        });
        worst = worst.max(rel_err(g.data(), &fx));
    }
    worst
}

pub fn avg_pool() -> f64 {
    let mut worst = 0.0f64;
    for (i, s) in shapes(5, 6).into_iter().enumerate() {
        let mut r = rng(500 + i as u64);
        let pool = Pool2d::new(2 + i % 2, 1 + (i / 2) % 2, Padding::Same);
        let x = random_tensor(&mut r, s, 1.0);
        let out_shape = pool.output_shape(s).unwrap();
        let probe = random_vec(&mut r, out_shape.len(), 1.0);
        let g = pool.avg_backward(s, &with_data(out_shape, &probe)).unwrap();
        let fx = central_diff(x.data(), &all_indices(s.len()), |d| {
            weighted_sum(pool.avg_forward(&with_data(s, d)).unwrap().data(), &probe)
        });
        worst = worst.max(rel_err(g.data(), &fx));
    }
    worst
}

pub fn avg2max() -> f64 {
    let mut worst = 0.0f64;
    for (i, s) in shapes(6, 6).into_iter().enumerate() {
        let mut r = rng(600 + i as u64);
        let x = random_tensor(&mut r, s, 1.0);
        let (y, arg) = avg2max_forward(&x).unwrap();
        let probe = random_vec(&mut r, y.shape().len(), 1.0);
        let g = avg2max_backward(s, &arg, &with_data(y.shape(), &probe)).unwrap();
        let fx = central_diff(x.data(), &all_indices(s.len()), |d| {
            weighted_sum(avg2max_forward(&with_data(s, d)).unwrap().0.data(), &probe)
        });
        worst = worst.max(rel_err(g.data(), &fx));
    }
    worst
}

pub fn global_average_pool() -> f64 {
    let mut worst = 0.0f64;
    for (i, s) in shapes(7, 5).into_iter().enumerate() {
        let mut r = rng(700 + i as u64);
        let x = random_tensor(&mut r, s, 1.0);
        let out_shape = Shape::new(s.n, 1, 1, s.c);
        let probe = random_vec(&mut r, out_shape.len(), 1.0);
        let g = global_avg_pool_backward(s, &with_data(out_shape, &probe)).unwrap();
        let fx = central_diff(x.data(), &all_indices(s.len()), |d| {
            weighted_sum(global_avg_pool(&with_data(s, d)).data(), &probe)
        });
        worst = worst.max(rel_err(g.data(), &fx));
    }
    worst
}

pub fn dense() -> f64 {
    let mut worst = 0.0f64;
    for (i, s) in shapes(8, 5).into_iter().enumerate() {
        let mut r = rng(800 + i as u64);
        let layer = Dense {
            inputs: s.item_len(),
            outputs: 2 + i,
        };
        let x = random_tensor(&mut r, s, 1.0);
        let w = random_vec(&mut r, layer.weight_len(), 0.5);
        let b = random_vec(&mut r, layer.outputs, 0.5);
        let out_shape = Shape::new(s.n, 1, 1, layer.outputs);
        let probe = random_vec(&mut r, out_shape.len(), 1.0);
        let g = layer.backward(&x, &w, &with_data(out_shape, &probe)).unwrap();
        let fx = central_diff(x.data(), &all_indices(s.len()), |d| {
            weighted_sum(layer.forward(&with_data(s, d), &w, &b).unwrap().data(), &probe)
        });
        let fw = central_diff(&w, &all_indices(w.len()), |d| {
            weighted_sum(layer.forward(&x, d, &b).unwrap().data(), &probe)
        });
        let fb = central_diff(&b, &all_indices(b.len()), |d| {
            weighted_sum(layer.forward(&x, &w, d).unwrap().data(), &probe)
        });
        worst = worst.max(rel_err(g.input.data(), &fx));
        worst = worst.max(rel_err(&g.weights, &fw));
        worst = worst.max(rel_err(&g.bias, &fb));
    }
    worst
}

pub fn softmax_cross_entropy() -> f64 {
    let mut worst = 0.0f64;
    use rand::Rng;
    for i in 0..5usize {
        let mut r = rng(900 + i as u64);
        let (n, k) = (1 + i, 2 + 2 * i);
        let s = Shape::new(n, 1, 1, k);
        let logits = random_tensor(&mut r, s, 3.0);
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
        let out = softmax_cce(&logits, &labels).unwrap();
        let fx = central_diff(logits.data(), &all_indices(s.len()), |d| {
            softmax_cce(&with_data(s, d), &labels).unwrap().loss
        });
        worst = worst.max(rel_err(out.grad_logits.data(), &fx));
    }
    worst
}

fn loss(net: &Network, params: &ParamStore<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let cache = net.forward(params, x, Mode::Train).unwrap();
    softmax_cce(cache.logits(), labels).unwrap().loss
}

/// Whole-model check on sampled entries of every trainable tensor. Returns
/// the worst relative error; a structurally zero gradient counts through its
/// absolute error against `ZERO_GRAD` instead.
pub fn whole_model(cfg: &ModelConfig, batch: usize, per_tensor: usize, seed: u64) -> f64 {
    let (net, mut params) = build_model::<f64>(cfg, seed).unwrap();
    let mut r = rng(seed);
    let x = random_tensor(&mut r, net.input_shape(batch), 1.0);
    let labels: Vec<usize> = (0..batch).map(|i| i % cfg.num_classes).collect();

    let cache = net.forward(&params, &x, Mode::Train).unwrap();
    let out = softmax_cce(cache.logits(), &labels).unwrap();
    net.backward(&mut params, cache, &out.grad_logits).unwrap();

    let mut worst = 0.0f64;
    let ids: Vec<_> = params
        .entries()
        .iter()
        .filter(|e| e.trainable)
        .map(|e| params.id(&e.name).unwrap())
        .collect();
    for id in ids {
        let entry = params.entry(id).clone();
        let mut idx = all_indices(entry.len());
        idx.shuffle(&mut r);
        idx.truncate(per_tensor);
        let analytic: Vec<f64> = idx.iter().map(|&i| entry.grad[i]).collect();
        let mut probe = params.clone();
        let numeric = central_diff(&entry.values, &idx, |d| {
            probe.values_mut(id).copy_from_slice(d);
            loss(&net, &probe, &x, &labels)
        });
        let zeros = vec![0.0; idx.len()];
        if abs_err(&analytic, &zeros).max(abs_err(&numeric, &zeros)) < ZERO_GRAD {
            if abs_err(&analytic, &numeric) >= ZERO_GRAD {
                return f64::INFINITY;
            }
            continue;
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Three blocks, no pcbs.
pub fn three_block_config() -> ModelConfig {
    ModelConfig::scaled(3, 3, (2, 3), 12, 2).unwrap()
}

/// Five blocks so both pcbs and one DWSC tail block are present.
pub fn both_pcb_config() -> ModelConfig {
    ModelConfig::scaled(5, 3, (2, 3), 32, 2).unwrap()
}
