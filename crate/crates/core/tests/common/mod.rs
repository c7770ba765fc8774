//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

pub mod fd;
pub mod gradcheck;
pub mod oracles;

use fibnet::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape, scale: f64) -> Tensor<f64> {
    let data = (0..shape.len()).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// The 40-image, 4-class synthetic corpus split 60/20/20 in memory:
/// `(class names, train, val, test)`.
pub fn synthetic_splits(
    seed: u64,
) -> (
    Vec<String>,
    fibnet::train::InMemoryDataset,
    fibnet::train::InMemoryDataset,
    fibnet::train::InMemoryDataset,
) {
    use fibnet::data::synthetic::{in_memory, SyntheticSpec};
    use fibnet::data::{stratified_split, Split, SplitRatios};

    let (names, ds) = in_memory(&SyntheticSpec::default()).unwrap();
    let records: Vec<_> = ds
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &c)| (std::path::PathBuf::from(format!("{i:03}")), c))
        .collect();
    let index = stratified_split(&names, &records, SplitRatios::default(), seed).unwrap();
    let pick = |s: Split| -> Vec<usize> {
        index
            .split(s)
            .iter()
            .map(|(p, _)| p.to_str().unwrap().parse().unwrap())
            .collect()
    };
    let (tr, va, te) = (pick(Split::Train), pick(Split::Val), pick(Split::Test));
    (names, ds.subset(&tr), ds.subset(&va), ds.subset(&te))
}

/// Small model used for the synthetic learning checks: 6 blocks of the
/// reference widths (21..233), both pcbs with a 24-filter conv, 32×32 input.
/// Batch-norm momentum 0.9 lets the running statistics settle within 75
/// optimizer steps.
pub fn small_config() -> fibnet::model::ModelConfig {
    let mut cfg = fibnet::model::ModelConfig::scaled(6, 4, (21, 34), 32, 24).unwrap();
    cfg.bn_momentum = 0.9;
    cfg
}
