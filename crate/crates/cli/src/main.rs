use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fibnet::data::synthetic::{write_corpus, SyntheticSpec};
use fibnet::data::{scan_dataset, Split, SplitRatios};
use fibnet::explain::{DEFAULT_ALPHA, DEFAULT_BINS};
use fibnet::model::{count_params, fibonacci_schedule, ModelConfig, PcbOrder, PcbSpec, REFERENCE_TOTAL};
use fibnet::run::{
    cmd_eval, cmd_gradcam, cmd_pool_preview, cmd_predict, cmd_report, cmd_train_with_progress, EvalRequest,
    RunConfig, CONFIG_FILE, DEFAULT_SEED, SPLITS_FILE,
};
use fibnet::train::{DecayGranularity, TrainConfig};

const THREADS_ENV: &str = "FIBNET_THREADS";

#[derive(Parser)]
#[command(name = "fibnet", version, about = "Train and inspect Fibonacci-Net image classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Scan a directory-per-class corpus, split it, train and write a run directory.
    Train(TrainArgs),
    /// Evaluate a run's checkpoint on one split.
    Eval(EvalArgs),
    /// Print class probabilities for images.
    Predict(PredictArgs),
    /// Print the per-layer parameter table for a configuration.
    CountParams(CountArgs),
    /// Write Avg-2Max pooled previews of images.
    PoolPreview(PreviewArgs),
    /// Write a Grad-CAM heat map and overlay for one image.
    Gradcam(GradcamArgs),
    /// Render curves.svg and summary.txt from a run's history.csv.
    Report(ReportArgs),
    /// Write the synthetic colour-class corpus used by the tests.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PcbChoice {
    Default,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderChoice {
    ConvThenPool,
    PoolThenConv,
}

#[derive(Clone, Copy, ValueEnum)]
enum GranularityChoice {
    PerEpoch,
    PerStep,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitChoice {
    Train,
    Val,
    Test,
}

impl From<SplitChoice> for Split {
    fn from(s: SplitChoice) -> Split {
        match s {
            SplitChoice::Train => Split::Train,
            SplitChoice::Val => Split::Val,
            SplitChoice::Test => Split::Test,
        }
    }
}

/// Model flags; each one overrides the matching `ModelConfig` field.
#[derive(Args, Default)]
struct ModelFlags {
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    /// Comma-separated widths; must follow the Fibonacci recurrence.
    #[arg(long, value_delimiter = ',')]
    filter_schedule: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pcb: Option<PcbChoice>,
    /// Filters of the conv inside the 3→5 pcb.
    #[arg(long)]
    pcb_filters: Option<usize>,
    #[arg(long, value_enum)]
    pcb_order: Option<OrderChoice>,
    #[arg(long)]
    input_size: Option<usize>,
    #[arg(long)]
    input_channels: Option<usize>,
    #[arg(long)]
    convs_per_block: Option<usize>,
    #[arg(long)]
    bn_momentum: Option<f64>,
    #[arg(long)]
    bn_epsilon: Option<f64>,
}

impl ModelFlags {
    fn apply(&self, cfg: &mut ModelConfig) -> Result<()> {
        if let Some(b) = self.blocks {
            cfg.num_blocks = b;
            if self.filter_schedule.is_none() {
                cfg.filter_schedule = fibonacci_schedule(b)?;
            }
            cfg.pcbs.retain(|p| p.merge_before_block <= b);
        }
        if let Some(s) = &self.filter_schedule {
            cfg.filter_schedule = s.clone();
        }
        if let Some(c) = self.classes {
            cfg.num_classes = c;
        }
        match self.pcb {
            Some(PcbChoice::None) => cfg.pcbs.clear(),
            Some(PcbChoice::Default) => {
                cfg.pcbs = ModelConfig::default_pcbs()
                    .into_iter()
                    .filter(|p| p.merge_before_block <= cfg.num_blocks)
                    .collect()
            }
            None => {}
        }
        if let Some(f) = self.pcb_filters {
            for p in cfg.pcbs.iter_mut() {
                if p.pre_pool_filters.is_some() {
                    *p = PcbSpec {
                        pre_pool_filters: Some(f),
                        ..*p
                    };
                }
            }
        }
        if let Some(o) = self.pcb_order {
            cfg.pcb_order = match o {
                OrderChoice::ConvThenPool => PcbOrder::ConvThenPool,
                OrderChoice::PoolThenConv => PcbOrder::PoolThenConv,
            };
        }
        if let Some(v) = self.input_size {
            cfg.input_size = v;
        }
        if let Some(v) = self.input_channels {
            cfg.input_channels = v;
        }
        if let Some(v) = self.convs_per_block {
            cfg.convs_per_block = v;
        }
        if let Some(v) = self.bn_momentum {
            cfg.bn_momentum = v;
        }
        if let Some(v) = self.bn_epsilon {
            cfg.bn_epsilon = v;
        }
        cfg.validate()?;
        Ok(())
    }
}

/// Training flags; each one overrides the matching `TrainConfig` field.
#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    lr_hold_epochs: Option<usize>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long, value_enum)]
    decay_granularity: Option<GranularityChoice>,
    #[arg(long)]
    adam_beta1: Option<f64>,
    #[arg(long)]
    adam_beta2: Option<f64>,
    #[arg(long)]
    adam_epsilon: Option<f64>,
    /// Seed of the per-epoch shuffle; defaults to --seed.
    #[arg(long)]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    no_shuffle: bool,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) -> Result<()> {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        set!(epochs, batch_size, base_lr, lr_hold_epochs, lr_decay, adam_beta1, adam_beta2, adam_epsilon);
        if let Some(g) = self.decay_granularity {
            cfg.decay_granularity = match g {
                GranularityChoice::PerEpoch => DecayGranularity::PerEpoch,
                GranularityChoice::PerStep => DecayGranularity::PerStep,
            };
        }
        if let Some(s) = self.shuffle_seed {
            cfg.seed = s;
        }
        if self.no_shuffle {
            cfg.shuffle = false;
        }
        cfg.validate()?;
        Ok(())
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus root with one sub-directory per class.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory to create or overwrite.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the split and weight init; defaults to 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Start from a saved config.json; flags override its fields.
    #[arg(long, conflicts_with = "from_run")]
    config: Option<PathBuf>,
    /// Re-run an existing run directory: its config.json and splits.csv.
    #[arg(long)]
    from_run: Option<PathBuf>,
    /// Reuse a split manifest instead of re-splitting.
    #[arg(long, conflicts_with = "from_run")]
    splits: Option<PathBuf>,
    /// Train,val,test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    split_ratios: Option<Vec<f64>>,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    /// Defaults to <run>/checkpoints/best.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitChoice,
    /// Overrides the data root stored in the run's config.json.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Defaults to <run>/eval-<split>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint of a model without pcbs to compare feature entropy against.
    #[arg(long)]
    entropy_against: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    entropy_bins: usize,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Print the table as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PreviewArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct GradcamArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Target class index; defaults to the predicted class.
    #[arg(long)]
    class: Option<usize>,
    /// Graph node to explain; defaults to the last standard-conv block.
    #[arg(long)]
    layer: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f32,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 40.0)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn build_run_config(args: &TrainArgs) -> Result<(RunConfig, Option<PathBuf>)> {
    let (mut cfg, splits) = if let Some(run) = &args.from_run {
        (RunConfig::load(&run.join(CONFIG_FILE))?, Some(run.join(SPLITS_FILE)))
    } else if let Some(path) = &args.config {
        (RunConfig::load(path)?, args.splits.clone())
    } else {
        let data = args.data.clone().context("--data is required without --config or --from-run")?;
        let mut model = ModelConfig::default();
        if args.model.classes.is_none() {
            model.num_classes = scan_dataset(&data)?.classes.len();
        }
        let cfg = RunConfig {
            model,
            train: TrainConfig::default(),
            data_root: data,
            output_dir: args.out.clone(),
            seed: DEFAULT_SEED,
            split: SplitRatios::default(),
        };
        (cfg, args.splits.clone())
    };
    if let Some(data) = &args.data {
        cfg.data_root = data.clone();
    }
    cfg.output_dir = args.out.clone();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(r) = &args.split_ratios {
        cfg.split = SplitRatios {
            train: r[0],
            val: r[1],
            test: r[2],
        };
    }
    args.model.apply(&mut cfg.model)?;
    args.train.apply(&mut cfg.train)?;
    Ok((cfg, splits))
}

fn train(args: TrainArgs) -> Result<()> {
    let (cfg, splits) = build_run_config(&args)?;
    println!("run directory {}", cfg.output_dir.display());
    let summary = cmd_train_with_progress(&cfg, splits.as_deref(), |r| {
        println!(
            "epoch {:>3}  lr {:.3e}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}  {:.1}s",
            r.epoch, r.lr, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.seconds
        );
    })?;
    for s in &summary.skipped {
        eprintln!("skipped {}: {}", s.path.display(), s.reason);
    }
    let [tr, va, te] = summary.split_sizes;
    println!(
        "{} classes, split {tr}/{va}/{te}, {} optimizer steps, best epoch {}",
        summary.classes.len(),
        summary.optimizer_steps,
        summary.best_epoch
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let req = EvalRequest {
        run_dir: args.run,
        checkpoint: args.checkpoint,
        split: args.split.into(),
        data_root: args.data,
        out_dir: args.out,
        entropy_against: args.entropy_against,
        entropy_bins: args.entropy_bins,
    };
    let out = cmd_eval(&req)?;
    print!("{}", out.report.render());
    println!("reports written to {}", out.out_dir.display());
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    for p in cmd_predict(&args.checkpoint, &args.images)? {
        let probs: Vec<String> = p.probs.iter().map(|v| format!("{v:.4}")).collect();
        println!(
            "{}\t{}\t{}\t[{}]",
            p.path.display(),
            p.class,
            p.class_name.as_deref().unwrap_or("-"),
            probs.join(", ")
        );
    }
    Ok(())
}

fn count(args: CountArgs) -> Result<()> {
    let mut cfg = ModelConfig::default();
    args.model.apply(&mut cfg)?;
    let table = count_params(&cfg);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        print!("{}", table.render());
        let delta = table.trainable as i64 - REFERENCE_TOTAL as i64;
        println!("reference total {REFERENCE_TOTAL}, delta {delta:+}");
    }
    Ok(())
}

fn preview(args: PreviewArgs) -> Result<()> {
    let mut failed = 0;
    for r in cmd_pool_preview(&args.images, &args.out)? {
        match r.output {
            Ok(path) => println!("{} -> {}", r.input.display(), path.display()),
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", r.input.display());
            }
        }
    }
    if failed > 0 {
        bail!("{failed} of {} images failed", args.images.len());
    }
    Ok(())
}

fn gradcam(args: GradcamArgs) -> Result<()> {
    let out = cmd_gradcam(
        &args.checkpoint,
        &args.image,
        args.class,
        args.layer.as_deref(),
        &args.out,
        args.alpha,
    )?;
    println!(
        "layer {} class {} (predicted {}) map {}x{} -> {}",
        out.sidecar.layer,
        out.sidecar.class,
        out.predicted,
        out.map.height,
        out.map.width,
        args.out.join(&out.sidecar.overlay_png).display()
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    print!("{}", cmd_report(&args.run)?.render());
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        classes: args.classes,
        per_class: args.per_class,
        size: args.size,
        noise: args.noise,
        seed: args.seed,
    };
    let names = write_corpus(&args.out, &spec)?;
    println!("{} classes x {} images in {}", names.len(), args.per_class, args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::CountParams(a) => count(a),
        Command::PoolPreview(a) => preview(a),
        Command::Gradcam(a) => gradcam(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
