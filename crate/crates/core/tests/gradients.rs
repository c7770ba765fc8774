//! Finite-difference checks of every backward pass in f64.

mod common;

use common::gradcheck::{self as gc, LAYER_TOL, MODEL_TOL};
use fibnet::layers::Mode;

fn within(worst: f64, tol: f64) {
    assert!(worst < tol, "worst relative error {worst:e} >= {tol:e}");
}

#[test]
fn conv2d() {
    within(gc::conv2d(), LAYER_TOL);
}

#[test]
fn dwsc() {
    within(gc::dwsc(), LAYER_TOL);
}

#[test]
fn batchnorm_train() {
    within(gc::batchnorm(Mode::Train), LAYER_TOL);
}

#[test]
fn batchnorm_infer() {
    within(gc::batchnorm(Mode::Infer), LAYER_TOL);
}

#[test]
fn max_pool() {
    within(gc::max_pool(), LAYER_TOL);
}

#[test]
fn avg_pool() {
    within(gc::avg_pool(), LAYER_TOL);
}

#[test]
fn avg2max() {
    within(gc::avg2max(), LAYER_TOL);
}

#[test]
fn global_average_pool() {
    within(gc::global_average_pool(), LAYER_TOL);
}

#[test]
fn dense() {
    within(gc::dense(), LAYER_TOL);
}

#[test]
fn softmax_cross_entropy() {
    within(gc::softmax_cross_entropy(), LAYER_TOL);
}

#[test]
fn whole_model_three_blocks() {
    let cfg = gc::three_block_config();
    assert!(cfg.pcbs.is_empty());
    within(gc::whole_model(&cfg, 3, 12, 11), MODEL_TOL);
}

#[test]
fn whole_model_with_both_pcbs() {
    let cfg = gc::both_pcb_config();
    assert_eq!(cfg.pcbs.len(), 2);
    within(gc::whole_model(&cfg, 2, 8, 12), MODEL_TOL);
}
