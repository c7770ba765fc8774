mod common;

use std::path::PathBuf;

use common::{random_tensor, rng};
use fibnet::data::{resize_bilinear, stratified_split, to_sample, PixelGrid, Split, SplitRatios};
use fibnet::explain::{feature_entropy, gradcam};
use fibnet::layers::Mode;
use fibnet::metrics::{build_report, class_metrics, confusion, roc_auc_ovr, ConfusionMatrix};
use fibnet::model::{build_model, count_params, fibonacci_from, ModelConfig, Op, PcbOrder, PcbSpec};
use fibnet::train::{lr_schedule, TrainConfig};
use fibnet::Tensor;
use proptest::prelude::*;

fn pcb_strategy() -> impl Strategy<Value = Vec<PcbSpec>> {
    prop::collection::btree_map(1usize..=6, prop::option::of(1usize..=12), 0..=3)
        .prop_map(|m| m.into_iter().map(|(src, f)| PcbSpec::new(src, f)).collect())
}

fn config_strategy() -> impl Strategy<Value = ModelConfig> {
    (
        3usize..=8,
        (1usize..=4, 1usize..=4),
        8usize..=96,
        1usize..=3,
        pcb_strategy(),
        any::<bool>(),
        2usize..=6,
    )
        .prop_filter_map("pcb merges past the last block", |(blocks, seed, size, cpb, pcbs, swap, classes)| {
            if pcbs.iter().any(|p| p.merge_before_block > blocks) {
                return None;
            }
            let cfg = ModelConfig {
                num_blocks: blocks,
                filter_schedule: fibonacci_from(seed, blocks).ok()?,
                pcbs,
                pcb_order: if swap { PcbOrder::PoolThenConv } else { PcbOrder::ConvThenPool },
                num_classes: classes,
                input_size: size,
                convs_per_block: cpb,
                ..ModelConfig::default()
            };
            cfg.validate().ok().map(|_| cfg)
        })
}

fn brute_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(positive).filter(|p| *p.1).map(|p| *p.0).collect();
    let neg: Vec<f64> = scores.iter().zip(positive).filter(|p| !*p.1).map(|p| *p.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let wins: f64 = pos
        .iter()
        .flat_map(|p| neg.iter().map(move |q| (p, q)))
        .map(|(p, q)| if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 })
        .sum();
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Labels with coarse probability rows so score ties are common.
fn labelled_probs() -> impl Strategy<Value = (usize, Vec<usize>, Vec<Vec<f64>>)> {
    (2usize..=5).prop_flat_map(|k| {
        prop::collection::vec((0..k, prop::collection::vec(1u32..=4, k)), 1..=50).prop_map(move |rows| {
            let truth = rows.iter().map(|r| r.0).collect();
            let probs = rows
                .iter()
                .map(|(_, w)| {
                    let s: u32 = w.iter().sum();
                    w.iter().map(|&v| v as f64 / s as f64).collect()
                })
                .collect();
            (k, truth, probs)
        })
    })
}

fn argmax(row: &[f64]) -> usize {
    (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_valid_config_merges_at_matching_resolution(cfg in config_strategy()) {
        // side after block i: halved (rounding up) by each of blocks 1..=5
        let side = |block: usize| (0..block.min(5)).fold(cfg.input_size, |s, _| s.div_ceil(2));
        let agree = cfg.pcbs.iter().all(|p| side(p.source_block).div_ceil(2) == side(p.merge_before_block - 1));
        let built = build_model::<f32>(&cfg, 0);
        prop_assert_eq!(built.is_ok(), agree, "{:?}", built.as_ref().err());
        let Ok((net, params)) = built else { return Ok(()) };
        for node in net.nodes().iter().filter(|n| matches!(n.op, Op::Concat)) {
            let (a, b) = (net.nodes()[node.inputs[0]].shape, net.nodes()[node.inputs[1]].shape);
            prop_assert_eq!((a.h, a.w), (b.h, b.w), "{}", node.name);
            prop_assert_eq!(node.shape.c, a.c + b.c);
        }
        let table = count_params(&cfg);
        prop_assert_eq!(table.trainable, params.trainable_count());
        prop_assert_eq!(table.non_trainable, params.non_trainable_count());
    }

    #[test]
    fn lr_holds_then_strictly_decays(hold in 1usize..=20, extra in 1usize..=20, decay in 0.5f64..0.99) {
        let cfg = TrainConfig { epochs: hold + extra, lr_hold_epochs: hold, lr_decay: decay, ..TrainConfig::default() };
        let lrs: Vec<f64> = (1..=cfg.epochs).map(|e| lr_schedule(e, &cfg).unwrap()).collect();
        prop_assert!(lrs[..hold].iter().all(|&l| l == cfg.base_lr));
        prop_assert!(lrs[hold - 1..].windows(2).all(|w| w[1] < w[0]));
        let floor = cfg.base_lr * decay.powi(extra as i32);
        prop_assert!(lrs.iter().all(|&l| l >= floor * (1.0 - 1e-12)));
    }

    #[test]
    fn split_is_a_pure_partition(counts in prop::collection::vec(3usize..=40, 2..=5), seed in any::<u64>()) {
        let classes: Vec<String> = (0..counts.len()).map(|i| format!("c{i}")).collect();
        let records: Vec<(PathBuf, usize)> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| (0..n).map(move |i| (PathBuf::from(format!("c{c}/{i}.png")), c)))
            .collect();
        let a = stratified_split(&classes, &records, SplitRatios::default(), seed).unwrap();
        let b = stratified_split(&classes, &records, SplitRatios::default(), seed).unwrap();
        prop_assert_eq!(&a, &b);
        for (c, &n) in counts.iter().enumerate() {
            let got = a.class_counts(c);
            prop_assert_eq!(got.iter().sum::<usize>(), n);
            prop_assert!(got.iter().all(|&g| g >= 1), "class {} of {}: {:?}", c, n, got);
        }
        let total: usize = [Split::Train, Split::Val, Split::Test].iter().map(|&s| a.split(s).len()).sum();
        prop_assert_eq!(total, records.len());
    }

    #[test]
    fn samples_are_unit_range_at_input_size(w in 1usize..=64, h in 1usize..=64, gray in any::<bool>(), seed in any::<u64>()) {
        let ch = if gray { 1 } else { 3 };
        let data: Vec<f32> = (0..w * h * ch).map(|i| ((i as u64 ^ seed) % 256) as f32).collect();
        let grid = resize_bilinear(&PixelGrid::new(w, h, ch, data).unwrap(), 224, 224);
        let s = to_sample(&grid, 0);
        prop_assert_eq!(s.pixels.shape().as_array(), [1, 224, 224, 3]);
        prop_assert!(s.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn metrics_match_brute_force((k, truth, probs) in labelled_probs()) {
        let pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let cm = confusion(&truth, &pred, k).unwrap();
        for (c, m) in class_metrics(&cm).iter().enumerate() {
            let count = |t: bool, p: bool| truth.iter().zip(&pred).filter(|(&a, &b)| (a == c) == t && (b == c) == p).count();
            let (tp, fp, fn_, tn) = (count(true, true), count(false, true), count(true, false), count(false, false));
            let r = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            prop_assert_eq!(m.precision, r(tp, tp + fp));
            prop_assert_eq!(m.recall, r(tp, tp + fn_));
            prop_assert_eq!(m.specificity, r(tn, tn + fp));
        }
        let names: Vec<String> = (0..k).map(|i| i.to_string()).collect();
        let report = build_report(&names, &truth, &probs).unwrap();
        // micro recall counts every correct prediction once
        let per_class = class_metrics(&cm);
        let tp: u64 = per_class.iter().map(|m| m.tp).sum();
        let support: u64 = per_class.iter().map(|m| m.tp + m.fn_).sum();
        prop_assert_eq!(tp as f64 / support as f64, report.accuracy);
    }

    #[test]
    fn auc_equals_pair_counting((k, truth, probs) in labelled_probs()) {
        prop_assume!(truth.len() <= 30);
        let lib = roc_auc_ovr(&probs, &truth).unwrap();
        for c in 0..k {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
            match (lib.per_class[c], brute_auc(&scores, &positive)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn diagonal_confusion_has_unit_specificity(diag in prop::collection::vec(1u64..=30, 2..=6)) {
        let rows: Vec<Vec<u64>> = (0..diag.len())
            .map(|i| (0..diag.len()).map(|j| if i == j { diag[i] } else { 0 }).collect())
            .collect();
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        prop_assert!(class_metrics(&cm).iter().all(|m| m.specificity == 1.0 && m.recall == 1.0));
    }

    #[test]
    fn entropy_is_bounded(values in prop::collection::vec(-1e3f64..1e3, 1..=400), bins in 2usize..=300) {
        let h = feature_entropy(&values, bins);
        prop_assert!(h >= 0.0 && h <= (bins as f64).log2() + 1e-12);
    }

    #[test]
    fn entropy_ignores_positive_affine_maps(
        values in prop::collection::vec(-500i32..500, 2..=300),
        shift in -1000i32..1000,
        scale_exp in -4i32..=4,
    ) {
        // integer data and power-of-two scales keep every bin edge exact
        let x: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let scale = 2f64.powi(scale_exp);
        let y: Vec<f64> = x.iter().map(|v| v * scale + shift as f64).collect();
        prop_assert_eq!(feature_entropy(&x, 256), feature_entropy(&y, 256));
    }

    #[test]
    fn entropy_is_mirror_invariant_on_continuous_values(seed in any::<u64>(), n in 2usize..=300) {
        let x = common::random_vec(&mut rng(seed), n, 10.0);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        // negation only moves values that sit exactly on a bin edge
        prop_assert!((feature_entropy(&x, 64) - feature_entropy(&y, 64)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn inference_forward_is_deterministic(seed in any::<u64>()) {
        let cfg = ModelConfig::scaled(4, 3, (2, 3), 16, 4).unwrap();
        let (net, params) = build_model::<f32>(&cfg, seed).unwrap();
        let x: Tensor<f32> = random_tensor(&mut rng(seed), net.input_shape(2), 1.0).cast();
        let a = net.forward(&params, &x, Mode::Infer).unwrap();
        let b = net.forward(&params, &x, Mode::Infer).unwrap();
        prop_assert_eq!(a.logits(), b.logits());
        prop_assert_eq!(a.logits(), &net.predict(&params, &x).unwrap());
    }

    #[test]
    fn heat_map_ignores_rescaling_the_target_column(seed in any::<u64>(), exp in -3i32..=3, target in 0usize..3) {
        let cfg = ModelConfig::scaled(4, 3, (2, 3), 16, 4).unwrap();
        let (net, mut params) = build_model::<f32>(&cfg, seed).unwrap();
        let x: Tensor<f32> = random_tensor(&mut rng(seed), net.input_shape(1), 1.0).cast();
        let layer = net.default_cam_layer();
        let before = gradcam(&net, &params, &x, target, &layer).unwrap();
        let scale = 2f32.powi(exp);
        let dense = params.get_mut("dense/w").unwrap();
        let outputs = *dense.shape.last().unwrap();
        for (i, w) in dense.values.iter_mut().enumerate() {
            if i % outputs == target {
                *w *= scale;
            }
        }
        let after = gradcam(&net, &params, &x, target, &layer).unwrap();
        prop_assert_eq!(before.values, after.values);
        prop_assert_eq!(before.raw_max * scale, after.raw_max);
    }
}
