use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::{load_image, resize_bilinear, to_sample, DatasetIndex, ImageFolderDataset, Split};
use crate::error::{Error, Result};
use crate::explain::{entropy_compare, gradcam, write_entropy_csv, write_heatmap, HeatMap, HeatMapSidecar};
use crate::layers::softmax;
use crate::metrics::{build_report, EvalReport};
use crate::model::{load_checkpoint, Manifest, Network, ParamStore};
use crate::run::{render_curves, RunConfig, CONFIG_FILE, CURVES_FILE, HISTORY_FILE, SPLITS_FILE};
use crate::tensor::Tensor;
use crate::train::{predict_probs, Samples, TrainHistory};

pub const CLASSIFICATION_FILE: &str = "classification_report.csv";
pub const CONFUSION_FILE: &str = "confusion_matrix.csv";
pub const REPORT_JSON: &str = "report.json";
pub const ENTROPY_FILE: &str = "entropy.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

const EVAL_BATCH: usize = 16;

/// What `cmd_eval` should evaluate and where to write it.
#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub run_dir: PathBuf,
    /// Defaults to `<run_dir>/checkpoints/best`.
    pub checkpoint: Option<PathBuf>,
    pub split: Split,
    /// Overrides the data root stored in `config.json`.
    pub data_root: Option<PathBuf>,
    /// Defaults to `<run_dir>/eval-<split>`.
    pub out_dir: Option<PathBuf>,
    /// Checkpoint of a model without pcbs; when set, `entropy.csv` compares
    /// it against the evaluated model on the same samples.
    pub entropy_against: Option<PathBuf>,
    pub entropy_bins: usize,
}

impl EvalRequest {
    pub fn new(run_dir: impl Into<PathBuf>, split: Split) -> Self {
        EvalRequest {
            run_dir: run_dir.into(),
            checkpoint: None,
            split,
            data_root: None,
            out_dir: None,
            entropy_against: None,
            entropy_bins: crate::explain::DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub out_dir: PathBuf,
    pub report: EvalReport,
}

fn load_matching(checkpoint: &Path, run: &RunConfig) -> Result<(Network, ParamStore<f32>, Manifest)> {
    let (net, params, manifest) = load_checkpoint(checkpoint)?;
    if manifest.config != run.model {
        return Err(Error::Checkpoint(format!(
            "{} was saved for a different model config than {}",
            checkpoint.display(),
            CONFIG_FILE
        )));
    }
    Ok((net, params, manifest))
}

/// Evaluates a run's checkpoint on one split and writes
/// `classification_report.csv`, `confusion_matrix.csv` and `report.json`.
pub fn cmd_eval(req: &EvalRequest) -> Result<EvalOutput> {
    let run = RunConfig::load(&req.run_dir.join(CONFIG_FILE))?;
    let index = DatasetIndex::read_csv(&req.run_dir.join(SPLITS_FILE), run.seed)?;
    let checkpoint = req
        .checkpoint
        .clone()
        .unwrap_or_else(|| req.run_dir.join("checkpoints").join("best"));
    let (net, params, _) = load_matching(&checkpoint, &run)?;

    let root = req.data_root.as_ref().unwrap_or(&run.data_root);
    let records: Vec<_> = index
        .split(req.split)
        .into_iter()
        .map(|(p, c)| (root.join(p), c))
        .collect();
    if records.is_empty() {
        return Err(Error::EmptySplit(req.split.as_str()));
    }
    let data = ImageFolderDataset::new(records, run.model.input_size);
    let probs: Vec<Vec<f64>> = predict_probs(&net, &params, &data, EVAL_BATCH)?
        .into_iter()
        .map(|r| r.into_iter().map(f64::from).collect())
        .collect();
    let truth: Vec<usize> = (0..data.len()).map(|i| data.label(i)).collect();
    let report = build_report(&index.classes, &truth, &probs)?;

    let out_dir = req
        .out_dir
        .clone()
        .unwrap_or_else(|| req.run_dir.join(format!("eval-{}", req.split.as_str())));
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    report.write_classification_csv(&out_dir.join(CLASSIFICATION_FILE))?;
    report.write_confusion_csv(&out_dir.join(CONFUSION_FILE))?;
    let json = out_dir.join(REPORT_JSON);
    fs::write(&json, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&json, e))?;

    if let Some(base) = &req.entropy_against {
        let (base_net, base_params, _) = load_checkpoint(base)?;
        let all: Vec<usize> = (0..data.len()).collect();
        let (x, _) = data.batch(&all)?;
        let (a, b) = entropy_compare((&net, &params), (&base_net, &base_params), &x, req.entropy_bins)?;
        write_entropy_csv(&out_dir.join(ENTROPY_FILE), &[&a, &b])?;
    }
    Ok(EvalOutput { out_dir, report })
}

fn load_input(path: &Path, size: usize) -> Result<Tensor<f32>> {
    let grid = resize_bilinear(&load_image(path)?, size, size);
    Ok(to_sample(&grid, 0).pixels)
}

fn class_name(manifest: &Manifest, class: usize) -> Option<String> {
    manifest.state.classes.get(class).cloned()
}

fn argmax(row: &[f32]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub path: PathBuf,
    pub class: usize,
    pub class_name: Option<String>,
    pub probs: Vec<f32>,
}

/// Class probabilities for each image under a checkpoint.
pub fn cmd_predict(checkpoint: &Path, images: &[PathBuf]) -> Result<Vec<Prediction>> {
    let (net, params, manifest) = load_checkpoint(checkpoint)?;
    images
        .iter()
        .map(|path| {
            let x = load_input(path, manifest.config.input_size)?;
            let probs = softmax(&net.predict(&params, &x)?).data().to_vec();
            let class = argmax(&probs);
            Ok(Prediction {
                path: path.clone(),
                class,
                class_name: class_name(&manifest, class),
                probs,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradcamOutput {
    pub map: HeatMap,
    pub sidecar: HeatMapSidecar,
    pub predicted: usize,
}

/// Grad-CAM for one image. `class` defaults to the predicted class and
/// `layer` to the network's default CAM layer.
pub fn cmd_gradcam(
    checkpoint: &Path,
    image: &Path,
    class: Option<usize>,
    layer: Option<&str>,
    out_dir: &Path,
    alpha: f32,
) -> Result<GradcamOutput> {
    let (net, params, manifest) = load_checkpoint(checkpoint)?;
    let x = load_input(image, manifest.config.input_size)?;
    let predicted = argmax(softmax(&net.predict(&params, &x)?).data());
    let target = class.unwrap_or(predicted);
    let layer = layer.map_or_else(|| net.default_cam_layer(), str::to_string);
    let map = gradcam(&net, &params, &x, target, &layer)?;
    let stem = image
        .file_stem()
        .map_or_else(|| "image".to_string(), |s| s.to_string_lossy().into_owned());
    let name = class_name(&manifest, target);
    let sidecar = write_heatmap(out_dir, &stem, &map, &x, name.as_deref(), alpha)?;
    Ok(GradcamOutput { map, sidecar, predicted })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub final_train_acc: f64,
    pub final_val_acc: f64,
    pub final_val_loss: f64,
    pub mean_seconds_per_epoch: f64,
}

impl ReportSummary {
    pub fn render(&self) -> String {
        format!(
            "epochs              {}\n\
             best epoch          {} (val acc {:.4})\n\
             final train acc     {:.4}\n\
             final val acc       {:.4}\n\
             final val loss      {:.4}\n\
             mean secs / epoch   {:.2}\n",
            self.epochs,
            self.best_epoch,
            self.best_val_acc,
            self.final_train_acc,
            self.final_val_acc,
            self.final_val_loss,
            self.mean_seconds_per_epoch
        )
    }
}

/// Renders `curves.svg` and `summary.txt` from a run's `history.csv`.
pub fn cmd_report(run_dir: &Path) -> Result<ReportSummary> {
    let history = TrainHistory::read_csv(&run_dir.join(HISTORY_FILE))?;
    let (best, last) = match (history.best(), history.last()) {
        (Some(b), Some(l)) => (b, l),
        _ => return Err(Error::EmptySplit("history")),
    };
    let summary = ReportSummary {
        epochs: history.len(),
        best_epoch: best.epoch,
        best_val_acc: best.val_acc,
        final_train_acc: last.train_acc,
        final_val_acc: last.val_acc,
        final_val_loss: last.val_loss,
        mean_seconds_per_epoch: history.records.iter().map(|r| r.seconds).sum::<f64>() / history.len() as f64,
    };
    let curves = run_dir.join(CURVES_FILE);
    fs::write(&curves, render_curves(&history)).map_err(|e| Error::io(&curves, e))?;
    let text = run_dir.join(SUMMARY_FILE);
    fs::write(&text, summary.render()).map_err(|e| Error::io(&text, e))?;
    Ok(summary)
}
