use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{scan_dataset, stratified_split, DatasetIndex, ImageFolderDataset, Skipped, Split};
use crate::error::{Error, Result};
use crate::model::{build_model, save_checkpoint, TrainingState};
use crate::run::{render_curves, RunConfig, RunLock, CONFIG_FILE, CURVES_FILE, HISTORY_FILE, SPLITS_FILE};
use crate::train::{steps_per_epoch, train, EpochRecord, TrainHistory};

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub classes: Vec<String>,
    /// `[train, val, test]` record counts.
    pub split_sizes: [usize; 3],
    pub skipped: Vec<Skipped>,
    pub history: TrainHistory,
    pub best_epoch: usize,
    pub optimizer_steps: u64,
}

fn relative_to(root: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

fn split_dataset(index: &DatasetIndex, root: &Path, split: Split, size: usize) -> ImageFolderDataset {
    let records = index
        .split(split)
        .into_iter()
        .map(|(p, c)| (root.join(p), c))
        .collect();
    ImageFolderDataset::new(records, size)
}

/// Scan, split, build, train; writes `config.json`, `splits.csv`,
/// `history.csv`, `curves.svg` and `checkpoints/{best,final}` into the
/// output directory. With `splits`, that split manifest is reused instead
/// of re-splitting.
pub fn cmd_train(cfg: &RunConfig, splits: Option<&Path>) -> Result<RunSummary> {
    cmd_train_with_progress(cfg, splits, |_| {})
}

/// [`cmd_train`], calling `progress` after each epoch's record is written.
pub fn cmd_train_with_progress(
    cfg: &RunConfig,
    splits: Option<&Path>,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<RunSummary> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let _lock = RunLock::acquire(out)?;

    let (index, skipped) = match splits {
        Some(path) => (DatasetIndex::read_csv(path, cfg.seed)?, Vec::new()),
        None => {
            let scan = scan_dataset(&cfg.data_root)?;
            let records: Vec<_> = scan
                .records
                .iter()
                .map(|(p, c)| (relative_to(&cfg.data_root, p), *c))
                .collect();
            (stratified_split(&scan.classes, &records, cfg.split, cfg.seed)?, scan.skipped)
        }
    };
    if index.classes.len() != cfg.model.num_classes {
        return Err(Error::Config(format!(
            "data has {} classes but the model is configured for {}",
            index.classes.len(),
            cfg.model.num_classes
        )));
    }
    cfg.save(&out.join(CONFIG_FILE))?;
    index.write_csv(&out.join(SPLITS_FILE))?;

    let (net, mut params) = build_model::<f32>(&cfg.model, cfg.seed)?;
    let size = cfg.model.input_size;
    let train_set = split_dataset(&index, &cfg.data_root, Split::Train, size);
    let val_set = split_dataset(&index, &cfg.data_root, Split::Val, size);
    let steps = steps_per_epoch(train_set.records().len(), cfg.train.batch_size) as u64;
    let ckpt = out.join("checkpoints");
    fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;

    let state = |r: &EpochRecord| TrainingState {
        epoch: r.epoch,
        optimizer_steps: steps * r.epoch as u64,
        val_accuracy: r.val_acc,
        val_loss: r.val_loss,
        seed: cfg.seed,
        classes: index.classes.clone(),
    };
    let mut so_far = TrainHistory::default();
    let mut best: Option<(usize, f64)> = None;
    let outcome = train(&net, &mut params, &train_set, &val_set, &cfg.train, |r, p| {
        if best.is_none_or(|(_, acc)| r.val_acc > acc) {
            best = Some((r.epoch, r.val_acc));
            save_checkpoint(&ckpt.join("best"), &cfg.model, p, &state(r))?;
        }
        so_far.records.push(r.clone());
        so_far.write_csv(&out.join(HISTORY_FILE))?;
        progress(r);
        Ok(())
    })?;
    let last = outcome.history.last().expect("at least one epoch");
    save_checkpoint(&ckpt.join("final"), &cfg.model, &params, &state(last))?;
    outcome.history.write_csv(&out.join(HISTORY_FILE))?;
    let curves = out.join(CURVES_FILE);
    fs::write(&curves, render_curves(&outcome.history)).map_err(|e| Error::io(&curves, e))?;

    Ok(RunSummary {
        run_dir: out.clone(),
        classes: index.classes.clone(),
        split_sizes: [Split::Train, Split::Val, Split::Test].map(|s| index.split(s).len()),
        skipped,
        best_epoch: best.map_or(0, |b| b.0),
        optimizer_steps: outcome.optimizer_steps,
        history: outcome.history,
    })
}
