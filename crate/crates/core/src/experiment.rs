//! Sweep orchestration over the synthetic corpus: every (value, seed) cell
//! trains a toy encoder on coarse labels and is scored on fine test labels.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::annotations::coarsen;
use crate::error::{Error, Result};
use crate::metrics::{accuracy_counts, boundary_recall, Radius};
use crate::trainer::{predict, synth_dataset, train_toy, Checkpoint, EncoderConfig, Sample, TrainConfig};

/// The swept quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    Lambda,
    M,
    Radius,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lambda" => Ok(Self::Lambda),
            "m" => Ok(Self::M),
            "radius" => Ok(Self::Radius),
            other => Err(Error::Parameter(format!("unknown sweep {other:?}; expected lambda, m or radius"))),
        }
    }
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::M => "m",
            Self::Radius => "radius",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sweep: Sweep,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Side length of the square synthetic images.
    pub size: usize,
    pub classes: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lambda: f64,
    pub m: f64,
    /// Erosion radius used to coarsen training and validation labels.
    pub radius: f64,
    pub epsilon: f64,
    pub data_seed: u64,
    /// Worker threads; 0 picks the available parallelism.
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sweep: Sweep::Lambda,
            values: vec![0.0, 0.075],
            seeds: (0..5).collect(),
            train: 200,
            val: 50,
            test: 50,
            size: 64,
            classes: 4,
            epochs: 10,
            lr: 0.0005,
            lambda: 0.075,
            m: 0.0,
            radius: 4.0,
            epsilon: 2.0,
            data_seed: 1000,
            workers: 0,
            out: None,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Parameter(format!("bad value {s:?} for {key}"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parameter(format!("bad value {v:?} for {key}")))
}

impl ExperimentConfig {
    /// Parses flat `key = value` lines; `#` starts a comment. Lists are
    /// comma-separated; `seeds` also accepts a count such as `seeds = 5`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "sweep" => c.sweep = value.parse()?,
                "values" => c.values = parse_list(key, value)?,
                "seeds" => {
                    c.seeds = if value.contains(',') {
                        parse_list(key, value)?
                    } else {
                        (0..parse_one::<u64>(key, value)?).collect()
                    }
                }
                "train" => c.train = parse_one(key, value)?,
                "val" => c.val = parse_one(key, value)?,
                "test" => c.test = parse_one(key, value)?,
                "size" => c.size = parse_one(key, value)?,
                "classes" => c.classes = parse_one(key, value)?,
                "epochs" => c.epochs = parse_one(key, value)?,
                "lr" => c.lr = parse_one(key, value)?,
                "lambda" => c.lambda = parse_one(key, value)?,
                "m" => c.m = parse_one(key, value)?,
                "radius" => c.radius = parse_one(key, value)?,
                "epsilon" => c.epsilon = parse_one(key, value)?,
                "data_seed" => c.data_seed = parse_one(key, value)?,
                "workers" => c.workers = parse_one(key, value)?,
                "out" => c.out = Some(PathBuf::from(value)),
                other => return Err(Error::Parameter(format!("line {}: unknown key {other:?}", n + 1))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.seeds.is_empty() {
            return Err(Error::Parameter("values and seeds must be non-empty".into()));
        }
        if self.train == 0 || self.test == 0 {
            return Err(Error::Parameter("train and test counts must be positive".into()));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter("sweep values must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn cell_settings(&self, value: f64) -> (f64, f64, f64) {
        match self.sweep {
            Sweep::Lambda => (value, self.m, self.radius),
            Sweep::M => (self.lambda, value, self.radius),
            Sweep::Radius => (self.lambda, self.m, value),
        }
    }
}

/// Train/validation/test splits; labels of the first two are coarse.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Mean unlabeled fraction of the coarse training labels.
    pub unlabeled_fraction: f64,
}

/// Synthesizes the corpus and coarsens its training and validation labels.
pub fn build_corpus(config: &ExperimentConfig, radius: f64) -> Result<Corpus> {
    let n = config.train + config.val + config.test;
    let mut all = synth_dataset(n, config.size, config.size, config.classes, config.data_seed)?;
    let test = all.split_off(config.train + config.val);
    for s in &mut all {
        s.labels = coarsen(&s.labels, radius, config.epsilon)?;
    }
    let val = all.split_off(config.train);
    let unlabeled_fraction = all.iter().map(|s| s.labels.unlabeled_fraction()).sum::<f64>() / all.len() as f64;
    Ok(Corpus {
        train: all,
        val,
        test,
        unlabeled_fraction,
    })
}

/// Pooled pixel accuracy and mean per-image boundary recall at AUTO radius.
pub fn evaluate(checkpoint: &Checkpoint, samples: &[Sample]) -> Result<(f64, f64)> {
    let (mut hit, mut total, mut br_sum, mut br_n) = (0usize, 0usize, 0.0, 0usize);
    for s in samples {
        let pred = predict(checkpoint, &s.image)?;
        let (m, n) = accuracy_counts(&pred, &s.labels)?;
        hit += m;
        total += n;
        if let Ok(br) = boundary_recall(&pred, &s.labels, Radius::Auto) {
            br_sum += br;
            br_n += 1;
        }
    }
    if total == 0 || br_n == 0 {
        return Err(Error::Data("test set has no labeled pixels or no boundaries".into()));
    }
    Ok((hit as f64 / total as f64, br_sum / br_n as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub value: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub boundary_recall: f64,
    pub unlabeled_fraction: f64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub br_mean: f64,
    pub br_std: f64,
    pub unlabeled_fraction: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_cell(config: &ExperimentConfig, corpus: &Corpus, value: f64, seed: u64) -> Result<CellResult> {
    let (lambda, m, _) = config.cell_settings(value);
    let train = TrainConfig {
        lr: config.lr,
        epochs: config.epochs,
        lambda,
        m,
        seed,
        slic_branch: true,
    };
    let outcome = train_toy(&corpus.train, &corpus.val, &EncoderConfig::new(config.classes), &train)?;
    let (accuracy, boundary_recall) = evaluate(&outcome.checkpoint, &corpus.test)?;
    Ok(CellResult {
        value,
        seed,
        accuracy,
        boundary_recall,
        unlabeled_fraction: corpus.unlabeled_fraction,
        best_epoch: outcome.checkpoint.epoch,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs every cell on a bounded worker pool. Results come back in
/// (value, seed) order regardless of scheduling. With `cell_dir`, every
/// finished cell is also written there as JSON.
pub fn run_cells(config: &ExperimentConfig, cell_dir: Option<&Path>) -> Result<Vec<CellResult>> {
    config.validate()?;
    // Corpora depend on the radius only.
    let mut corpora: Vec<(f64, Corpus)> = Vec::new();
    for &v in &config.values {
        let radius = config.cell_settings(v).2;
        if !corpora.iter().any(|(r, _)| *r == radius) {
            corpora.push((radius, build_corpus(config, radius)?));
        }
    }
    let cells: Vec<(f64, u64)> = config
        .values
        .iter()
        .flat_map(|&v| config.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let workers = match config.workers {
        0 => thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(cells.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellResult>>>> = Mutex::new(cells.iter().map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(value, seed)) = cells.get(i) else {
                    break;
                };
                let radius = config.cell_settings(value).2;
                let corpus = &corpora.iter().find(|(r, _)| *r == radius).expect("corpus built").1;
                let r = run_cell(config, corpus, value, seed);
                if let (Ok(cell), Some(dir)) = (&r, cell_dir) {
                    let name = format!("cell_{}_{}_seed{seed}.json", config.sweep.name(), value);
                    let json = serde_json::to_vec_pretty(cell).expect("cell serializes");
                    if let Err(e) = write_atomic(&dir.join(name), &json) {
                        log::warn!("could not write cell result: {e}");
                    }
                }
                log::info!("{} = {value}, seed {seed} finished", config.sweep.name());
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

/// Aggregates cells into one row per sweep value, in sweep order.
pub fn summarize(config: &ExperimentConfig, cells: &[CellResult]) -> Vec<SweepRow> {
    config
        .values
        .iter()
        .map(|&v| {
            let group: Vec<&CellResult> = cells.iter().filter(|c| c.value == v).collect();
            let acc: Vec<f64> = group.iter().map(|c| c.accuracy).collect();
            let br: Vec<f64> = group.iter().map(|c| c.boundary_recall).collect();
            let (acc_mean, acc_std) = mean_std(&acc);
            let (br_mean, br_std) = mean_std(&br);
            SweepRow {
                value: v,
                runs: group.len(),
                acc_mean,
                acc_std,
                br_mean,
                br_std,
                unlabeled_fraction: group.first().map_or(0.0, |c| c.unlabeled_fraction),
            }
        })
        .collect()
}

pub fn to_csv(sweep: Sweep, rows: &[SweepRow]) -> String {
    let mut s = format!("{},runs,acc_mean,acc_std,br_mean,br_std,unlabeled_fraction\n", sweep.name());
    for r in rows {
        writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.value, r.runs, r.acc_mean, r.acc_std, r.br_mean, r.br_std, r.unlabeled_fraction
        )
        .expect("writing to a string");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_headline_config_is_the_default() {
        let shipped = ExperimentConfig::parse(include_str!("../configs/headline.cfg")).unwrap();
        let expected = ExperimentConfig {
            out: Some(PathBuf::from("headline.csv")),
            ..ExperimentConfig::default()
        };
        assert_eq!(shipped, expected);
    }

    #[test]
    fn parses_config() {
        let c = ExperimentConfig::parse(
            "# sweep over lambda\nsweep = lambda\nvalues = 0, 0.075\nseeds = 3\nsize = 16\nout = /tmp/x.csv\n",
        )
        .unwrap();
        assert_eq!(c.sweep, Sweep::Lambda);
        assert_eq!(c.values, vec![0.0, 0.075]);
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.size, 16);
        assert_eq!(c.out, Some(PathBuf::from("/tmp/x.csv")));
        assert_eq!(ExperimentConfig::parse("seeds = 4, 9").unwrap().seeds, vec![4, 9]);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("sweep = gamma").is_err());
        assert!(ExperimentConfig::parse("epochs = many").is_err());
        assert!(ExperimentConfig::parse("values =").is_err());
        assert!(ExperimentConfig::parse("just a line").is_err());
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radius_sweep_unlabeled_fraction_increases() {
        let c = ExperimentConfig {
            sweep: Sweep::Radius,
            train: 6,
            val: 0,
            test: 1,
            size: 32,
            ..ExperimentConfig::default()
        };
        let mut last = -1.0;
        for r in [0.0, 2.0, 4.0, 8.0] {
            let f = build_corpus(&c, r).unwrap().unlabeled_fraction;
            assert!(f > last, "radius {r}: {f}");
            last = f;
        }
    }

    #[test]
    fn tiny_sweep_runs_and_orders_rows() {
        let c = ExperimentConfig {
            values: vec![0.0, 0.1],
            seeds: vec![0, 1],
            train: 2,
            val: 1,
            test: 2,
            size: 8,
            epochs: 1,
            workers: 2,
            ..ExperimentConfig::default()
        };
        let cells = run_cells(&c, None).unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!((cells[2].value, cells[2].seed), (0.1, 0));
        let rows = summarize(&c, &cells);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].runs, 2);
        let csv = to_csv(c.sweep, &rows);
        assert!(csv.starts_with("lambda,runs,acc_mean"));
        assert_eq!(csv.lines().count(), 3);
    }
}
