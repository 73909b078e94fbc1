//! The `spixreg` command surface. Every command writes its artifacts plus one
//! run manifest, and maps failures to exit codes: 2 for bad input or
//! contract violations, 3 for numerical failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::annotations::{coarsen, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::experiment::{run_cells, summarize, to_csv, ExperimentConfig};
use crate::labels::{LabelMap, UNLABELED};
use crate::losses::{compactness_term, slic_loss};
use crate::metrics::{boundary_pixels, mann_whitney_one_sided, BoundaryRecallVariant, MetricsReport, Radius};
use crate::netpbm::{read_pgm, read_ppm, write_pgm, write_pgm16, write_ppm};
use crate::superpixel::{hard_labels, slic, SlicParams};
use crate::tensor::FeatureMap;
use crate::trainer::{
    holdout_split, direct_fit, predict, synth_dataset, train_toy, Checkpoint, DirectFitConfig, EncoderConfig, Sample,
    TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

#[derive(Debug, Parser)]
#[command(name = "spixreg", version, about = "Superpixel decoding with SLIC regularization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Field {
    #[value(name = "BR", alias = "br")]
    Br,
    #[value(name = "ACC", alias = "acc")]
    Acc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classic SLIC superpixels of a PPM image.
    Slic {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 10.0)]
        compactness: f64,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long)]
        out_labels: PathBuf,
        #[arg(long)]
        out_overlay: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Coarse annotation from a fine PGM label map.
    Coarsen {
        #[arg(long)]
        fine: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        radius: f64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Pixel accuracy and boundary recall of a prediction, or of every
    /// same-named pair in two directories.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// `AUTO` or a pixel count.
        #[arg(long, default_value = "AUTO")]
        r: Radius,
        /// Use the conventional recall `n(b(y) ∩ dilated b(ŷ)) / n(b(y))`.
        #[arg(long)]
        standard_br: bool,
        #[arg(long)]
        out_json: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Fits assignment logits directly to an image and writes hard superpixels.
    Fit {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long, default_value_t = 0.0)]
        m: f64,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_labels: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Trains the toy encoder on `image_XXXX.ppm` / `label_XXXX.pgm` pairs.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        /// Validation pairs; without it the last fifth of the data is held out.
        #[arg(long)]
        val_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0.075)]
        lambda: f64,
        #[arg(long, default_value_t = 0.0)]
        m: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.0005)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Class count; inferred from the labels when omitted.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        out_checkpoint: PathBuf,
        /// Per-epoch JSON lines; defaults to `<checkpoint>.log.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Segments an image with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// One-sided Mann-Whitney U test that group A exceeds group B.
    Compare {
        #[arg(long)]
        metrics_a: PathBuf,
        #[arg(long)]
        metrics_b: PathBuf,
        #[arg(long, value_enum, default_value = "BR")]
        field: Field,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Runs a sweep described by a key = value config and writes a CSV.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Writes a synthetic dataset directory.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coarsen the written labels with this erosion radius.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

/// Record of one command run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub artifacts: Vec<PathBuf>,
    pub metrics: Value,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

impl RunManifest {
    fn new(command: &str, seed: Option<u64>) -> Self {
        Self {
            command: command.into(),
            config: BTreeMap::new(),
            seed,
            artifacts: Vec::new(),
            metrics: Value::Null,
            created: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    fn set(&mut self, key: &str, value: impl Serialize) {
        self.config.insert(key.into(), serde_json::to_value(value).expect("config values serialize"));
    }

    fn write(&self, explicit: Option<&Path>, primary: Option<&Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        match explicit.map(Path::to_path_buf).or_else(|| primary.map(manifest_path)) {
            Some(path) => fs::write(path, json + "\n")?,
            None => println!("{json}"),
        }
        Ok(())
    }
}

fn manifest_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Slic {
            image,
            n,
            compactness,
            iters,
            out_labels,
            out_overlay,
            manifest,
        } => cmd_slic(&image, n, compactness, iters, &out_labels, out_overlay.as_deref(), manifest.as_deref()),
        Command::Coarsen {
            fine,
            radius,
            epsilon,
            out,
            manifest,
        } => cmd_coarsen(&fine, radius, epsilon, &out, manifest.as_deref()),
        Command::Eval {
            pred,
            truth,
            r,
            standard_br,
            out_json,
            manifest,
        } => {
            let variant = if standard_br {
                BoundaryRecallVariant::Standard
            } else {
                BoundaryRecallVariant::Verbatim
            };
            cmd_eval(&pred, &truth, r, variant, &out_json, manifest.as_deref())
        }
        Command::Fit {
            image,
            levels,
            m,
            steps,
            lr,
            seed,
            out_labels,
            manifest,
        } => {
            let config = DirectFitConfig { levels, m, steps, lr, seed };
            cmd_fit(&image, &config, &out_labels, manifest.as_deref())
        }
        Command::Train {
            data_dir,
            val_dir,
            lambda,
            m,
            epochs,
            lr,
            seed,
            classes,
            out_checkpoint,
            log,
            manifest,
        } => {
            let config = TrainConfig {
                lr,
                epochs,
                lambda,
                m,
                seed,
                slic_branch: true,
            };
            cmd_train(&data_dir, val_dir.as_deref(), classes, &config, &out_checkpoint, log.as_deref(), manifest.as_deref())
        }
        Command::Predict {
            checkpoint,
            image,
            out,
            manifest,
        } => cmd_predict(&checkpoint, &image, &out, manifest.as_deref()),
        Command::Compare {
            metrics_a,
            metrics_b,
            field,
            manifest,
        } => cmd_compare(&metrics_a, &metrics_b, field, manifest.as_deref()),
        Command::Experiment { config, out, manifest } => cmd_experiment(&config, out, manifest.as_deref()),
        Command::Synth {
            out_dir,
            count,
            size,
            classes,
            seed,
            radius,
            epsilon,
            manifest,
        } => cmd_synth(&out_dir, count, size, classes, seed, radius, epsilon, manifest.as_deref()),
    }
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Data(format!("{}: {io}", path.display())),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn load_ppm(path: &Path) -> Result<FeatureMap> {
    with_path(path, read_ppm(path))
}

fn load_pgm(path: &Path) -> Result<LabelMap> {
    with_path(path, read_pgm(path))
}

/// Image with the boundary pixels of `labels` painted yellow.
pub fn boundary_overlay(image: &FeatureMap, labels: &LabelMap) -> FeatureMap {
    let b = boundary_pixels(labels);
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if b.contains(y, x) {
                out.pixel_mut(y, x).copy_from_slice(&[1.0, 1.0, 0.0]);
            }
        }
    }
    out
}

pub fn cmd_slic(
    image: &Path,
    n: usize,
    compactness: f64,
    iters: usize,
    out_labels: &Path,
    out_overlay: Option<&Path>,
    manifest: Option<&Path>,
) -> Result<()> {
    let img = load_ppm(image)?;
    let params = SlicParams {
        n_superpixels: n,
        compactness,
        iterations: iters,
    };
    let labels = slic(&img, &params)?;
    write_pgm16(out_labels, &labels)?;
    let mut run = RunManifest::new("slic", None);
    run.set("image", image);
    run.set("n", n);
    run.set("compactness", compactness);
    run.set("iters", iters);
    run.artifacts.push(out_labels.to_path_buf());
    if let Some(path) = out_overlay {
        write_ppm(path, &boundary_overlay(&img, &labels))?;
        run.artifacts.push(path.to_path_buf());
    }
    let count = labels.distinct();
    println!("{count} superpixels");
    run.metrics = json!({ "superpixels": count });
    run.write(manifest, Some(out_labels))
}

pub fn cmd_coarsen(fine: &Path, radius: f64, epsilon: f64, out: &Path, manifest: Option<&Path>) -> Result<()> {
    let map = load_pgm(fine)?;
    let coarse = coarsen(&map, radius, epsilon)?;
    write_pgm(out, &coarse)?;
    let fraction = coarse.unlabeled_fraction();
    println!("unlabeled fraction {fraction:.6}");
    let mut run = RunManifest::new("coarsen", None);
    run.set("fine", fine);
    run.set("radius", radius);
    run.set("epsilon", epsilon);
    run.artifacts.push(out.to_path_buf());
    run.metrics = json!({ "unlabeled_fraction": fraction });
    run.write(manifest, Some(out))
}

fn evaluate_pair(pred: &Path, truth: &Path, r: Radius, variant: BoundaryRecallVariant) -> Result<MetricsReport> {
    let (p, t) = (load_pgm(pred)?, load_pgm(truth)?);
    let mut report = MetricsReport::evaluate(&p, &t, r)?;
    if variant == BoundaryRecallVariant::Standard {
        report.boundary_recall = crate::metrics::boundary_recall_variant(&p, &t, Radius::Pixels(report.r_used), variant)?;
    }
    Ok(report)
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = with_path(dir, fs::read_dir(dir).map_err(Error::from))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn cmd_eval(
    pred: &Path,
    truth: &Path,
    r: Radius,
    variant: BoundaryRecallVariant,
    out_json: &Path,
    manifest: Option<&Path>,
) -> Result<()> {
    let mut run = RunManifest::new("eval", None);
    run.set("pred", pred);
    run.set("truth", truth);
    run.set("r", r.to_string());
    run.set("variant", variant);
    run.artifacts.push(out_json.to_path_buf());
    if pred.is_dir() && truth.is_dir() {
        let mut lines = String::new();
        let (mut acc, mut br, mut count) = (0.0, 0.0, 0usize);
        for p in pgm_files(pred)? {
            let name = p.file_name().expect("listed files have names");
            let t = truth.join(name);
            if !t.exists() {
                return Err(Error::Data(format!("no ground truth for {}", p.display())));
            }
            let report = evaluate_pair(&p, &t, r, variant)?;
            acc += report.pixel_accuracy;
            br += report.boundary_recall;
            count += 1;
            let mut line = serde_json::to_value(&report).expect("report serializes");
            line["file"] = json!(name.to_string_lossy());
            lines.push_str(&line.to_string());
            lines.push('\n');
        }
        if count == 0 {
            return Err(Error::Data(format!("no PGM files in {}", pred.display())));
        }
        let aggregate = json!({
            "aggregate": { "images": count, "pixel_accuracy": acc / count as f64, "boundary_recall": br / count as f64 }
        });
        lines.push_str(&aggregate.to_string());
        lines.push('\n');
        fs::write(out_json, lines)?;
        println!("{}", aggregate["aggregate"]);
        run.metrics = aggregate["aggregate"].clone();
    } else {
        let report = evaluate_pair(pred, truth, r, variant)?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(out_json, json.clone() + "\n")?;
        println!("{json}");
        run.metrics = serde_json::to_value(&report).expect("report serializes");
    }
    run.write(manifest, Some(out_json))
}

pub fn cmd_fit(image: &Path, config: &DirectFitConfig, out_labels: &Path, manifest: Option<&Path>) -> Result<()> {
    let img = load_ppm(image)?;
    let fit = direct_fit(&img, config)?;
    let labels = hard_labels(&fit.pyramid);
    write_pgm16(out_labels, &labels)?;
    let (first, last) = (fit.losses[0], *fit.losses.last().expect("at least one loss"));
    let slic = slic_loss(&img, &fit.pyramid)?;
    let compact = compactness_term(&fit.pyramid, img.height(), img.width())?;
    println!("initial loss {first:.6}");
    println!("final loss {last:.6}");
    let mut run = RunManifest::new("fit", Some(config.seed));
    run.set("image", image);
    run.set("levels", config.levels);
    run.set("m", config.m);
    run.set("steps", config.steps);
    run.set("lr", config.lr);
    run.artifacts.push(out_labels.to_path_buf());
    run.metrics = json!({
        "initial_loss": first,
        "final_loss": last,
        "slic_loss": slic,
        "compactness_term": compact,
    });
    run.write(manifest, Some(out_labels))
}

/// Reads `image_XXXX.ppm` / `label_XXXX.pgm` pairs, sorted by key. Files
/// without a partner are reported together.
pub fn load_dataset(dir: &Path) -> Result<Vec<Sample>> {
    let mut images = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for entry in with_path(dir, fs::read_dir(dir).map_err(Error::from))? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(key) = name.strip_prefix("image_").and_then(|s| s.strip_suffix(".ppm")) {
            images.insert(key.to_string(), path);
        } else if let Some(key) = name.strip_prefix("label_").and_then(|s| s.strip_suffix(".pgm")) {
            labels.insert(key.to_string(), path);
        }
    }
    let unpaired: Vec<String> = images
        .iter()
        .filter(|(k, _)| !labels.contains_key(*k))
        .chain(labels.iter().filter(|(k, _)| !images.contains_key(*k)))
        .map(|(_, p)| p.display().to_string())
        .collect();
    if !unpaired.is_empty() {
        return Err(Error::Data(format!("unpaired files: {}", unpaired.join(", "))));
    }
    if images.is_empty() {
        return Err(Error::Data(format!("no image/label pairs in {}", dir.display())));
    }
    images
        .iter()
        .map(|(k, img)| {
            let image = load_ppm(img)?;
            let labels = load_pgm(&labels[k])?;
            if (image.height(), image.width()) != labels.dims() {
                return Err(Error::Data(format!("pair {k}: image and label sizes differ")));
            }
            Ok(Sample { image, labels })
        })
        .collect()
}

fn infer_classes(samples: &[Sample]) -> usize {
    let max = samples
        .iter()
        .flat_map(|s| s.labels.ids().iter().copied())
        .filter(|&id| id != UNLABELED as u32)
        .max()
        .unwrap_or(0);
    (max as usize + 1).max(2)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    data_dir: &Path,
    val_dir: Option<&Path>,
    classes: Option<usize>,
    config: &TrainConfig,
    out_checkpoint: &Path,
    log: Option<&Path>,
    manifest: Option<&Path>,
) -> Result<()> {
    let data = load_dataset(data_dir)?;
    let (train, val) = match val_dir {
        Some(dir) => (data, load_dataset(dir)?),
        None => holdout_split(data),
    };
    let classes = classes.unwrap_or_else(|| infer_classes(&train));
    let outcome = train_toy(&train, &val, &EncoderConfig::new(classes), config)?;
    outcome.checkpoint.save(out_checkpoint)?;
    let log_path = log.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut s = out_checkpoint.as_os_str().to_owned();
        s.push(".log.jsonl");
        PathBuf::from(s)
    });
    let mut lines = String::new();
    for h in &outcome.history {
        lines.push_str(&serde_json::to_string(h).expect("log serializes"));
        lines.push('\n');
    }
    fs::write(&log_path, &lines)?;
    print!("{lines}");
    let mut run = RunManifest::new("train", Some(config.seed));
    run.set("data_dir", data_dir);
    run.set("val_dir", val_dir);
    run.set("classes", classes);
    run.set("train", config);
    run.artifacts.push(out_checkpoint.to_path_buf());
    run.artifacts.push(log_path);
    run.metrics = json!({
        "best_epoch": outcome.checkpoint.epoch,
        "val_accuracy": outcome.checkpoint.val_accuracy,
        "train_images": train.len(),
        "val_images": val.len(),
    });
    run.write(manifest, Some(out_checkpoint))
}

pub fn cmd_predict(checkpoint: &Path, image: &Path, out: &Path, manifest: Option<&Path>) -> Result<()> {
    let ckpt = with_path(checkpoint, Checkpoint::load(checkpoint))?;
    let img = load_ppm(image)?;
    let labels = predict(&ckpt, &img)?;
    write_pgm(out, &labels)?;
    let mut run = RunManifest::new("predict", ckpt.train.as_ref().map(|t| t.seed));
    run.set("checkpoint", checkpoint);
    run.set("image", image);
    run.artifacts.push(out.to_path_buf());
    run.metrics = json!({ "classes_present": labels.distinct() });
    run.write(manifest, Some(out))
}

/// Values of `field` from a metrics file: one JSON object, or JSON lines
/// (aggregate lines are skipped).
pub fn read_metric_values(path: &Path, field: Field) -> Result<Vec<f64>> {
    let text = with_path(path, fs::read_to_string(path).map_err(Error::from))?;
    let key = match field {
        Field::Br => "boundary_recall",
        Field::Acc => "pixel_accuracy",
    };
    let mut docs: Vec<Value> = Vec::new();
    match serde_json::from_str::<Value>(&text) {
        Ok(v) => docs.push(v),
        Err(_) => {
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                docs.push(
                    serde_json::from_str(line)
                        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
                );
            }
        }
    }
    let values: Vec<f64> = docs
        .iter()
        .flat_map(|d| match d {
            Value::Array(items) => items.iter().collect::<Vec<_>>(),
            other => vec![other],
        })
        .filter(|d| d.get("aggregate").is_none())
        .filter_map(|d| d.get(key).and_then(Value::as_f64))
        .collect();
    if values.is_empty() {
        return Err(Error::Data(format!("{}: no {key} values", path.display())));
    }
    Ok(values)
}

pub fn cmd_compare(a: &Path, b: &Path, field: Field, manifest: Option<&Path>) -> Result<()> {
    let va = read_metric_values(a, field)?;
    let vb = read_metric_values(b, field)?;
    let test = mann_whitney_one_sided(&va, &vb)?;
    let significant = test.p_value < 0.05;
    println!("U = {}", test.u);
    println!("p = {:.6}{}", test.p_value, if test.exact { " (exact)" } else { " (normal approximation)" });
    println!("significant@0.05: {}", if significant { "yes" } else { "no" });
    let mut run = RunManifest::new("compare", None);
    run.set("metrics_a", a);
    run.set("metrics_b", b);
    run.set("field", format!("{field:?}").to_uppercase());
    run.metrics = json!({
        "u": test.u,
        "p_value": test.p_value,
        "exact": test.exact,
        "significant": significant,
        "n_a": va.len(),
        "n_b": vb.len(),
    });
    run.write(manifest, None)
}

pub fn cmd_experiment(config_path: &Path, out: Option<PathBuf>, manifest: Option<&Path>) -> Result<()> {
    let text = with_path(config_path, fs::read_to_string(config_path).map_err(Error::from))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if out.is_some() {
        config.out = out;
    }
    let cell_dir = config.out.as_ref().map(|o| {
        let mut s = o.as_os_str().to_owned();
        s.push(".cells");
        PathBuf::from(s)
    });
    if let Some(dir) = &cell_dir {
        fs::create_dir_all(dir)?;
    }
    let cells = run_cells(&config, cell_dir.as_deref())?;
    let rows = summarize(&config, &cells);
    let csv = to_csv(config.sweep, &rows);
    let mut run = RunManifest::new("experiment", None);
    run.set("config", &config);
    match &config.out {
        Some(path) => {
            fs::write(path, &csv)?;
            run.artifacts.push(path.clone());
            run.artifacts.extend(cell_dir);
        }
        None => print!("{csv}"),
    }
    run.metrics = serde_json::to_value(&rows).expect("rows serialize");
    run.write(manifest, config.out.as_deref())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    out_dir: &Path,
    count: usize,
    size: usize,
    classes: usize,
    seed: u64,
    radius: Option<f64>,
    epsilon: f64,
    manifest: Option<&Path>,
) -> Result<()> {
    let data = synth_dataset(count, size, size, classes, seed)?;
    fs::create_dir_all(out_dir)?;
    let mut unlabeled = 0.0;
    for (i, s) in data.iter().enumerate() {
        write_ppm(out_dir.join(format!("image_{i:04}.ppm")), &s.image)?;
        let labels = match radius {
            Some(r) => {
                write_pgm(out_dir.join(format!("fine_{i:04}.pgm")), &s.labels)?;
                coarsen(&s.labels, r, epsilon)?
            }
            None => s.labels.clone(),
        };
        unlabeled += labels.unlabeled_fraction();
        write_pgm(out_dir.join(format!("label_{i:04}.pgm")), &labels)?;
    }
    let mut run = RunManifest::new("synth", Some(seed));
    run.set("count", count);
    run.set("size", size);
    run.set("classes", classes);
    run.set("radius", radius);
    run.set("epsilon", epsilon);
    run.artifacts.push(out_dir.to_path_buf());
    run.metrics = json!({ "unlabeled_fraction": if count > 0 { unlabeled / count as f64 } else { 0.0 } });
    println!("wrote {count} pairs to {}", out_dir.display());
    run.write(manifest, Some(&out_dir.join("synth")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Numerical("x".into())), 3);
        assert_eq!(exit_code(&Error::Data("x".into())), 2);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 2);
    }

    #[test]
    fn parse_errors_exit_two() {
        assert_eq!(main_with_args(["spixreg", "nonsense"]), 2);
        assert_eq!(main_with_args(["spixreg", "eval", "--pred", "a"]), 2);
        assert_eq!(main_with_args(["spixreg", "--help"]), 0);
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path(Path::new("out/x.pgm")), PathBuf::from("out/x.pgm.manifest.json"));
    }
}
