//! Config-driven experiment protocols behind the `ntae` command line.
//!
//! Each protocol is a function of its config alone: every random stream is
//! derived from the config's base seed, so a rerun reproduces all numbers
//! except the wall-clock columns. Results come back as a [`Report`] that
//! serializes to one JSON document (with the full config echoed) and one
//! CSV file per table.
//!
//! Configs are TOML. Unknown keys are rejected with an error naming them.

mod cluster;
mod compress;
mod single;
mod sweep;
mod synth;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::models::{ModePlan, ModelKind, ModelSpec};
use crate::training::{History, TrainConfig};

pub use cluster::{cluster, ClusterConfig};
pub use compress::{compress, CompressConfig};
pub use single::{eval, train_single, TrainCommandConfig};
pub use sweep::{param_sweep, ParamSweepConfig};
pub use synth::{permutation_study, synth_benchmark, DataSection, PermutationStudyConfig, SynthBenchmarkConfig};

/// Parses a TOML config, rejecting unknown keys.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().replace('\n', " ")))
}

/// Reads and parses a TOML config file.
pub fn load_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn default_alpha() -> f64 {
    0.5
}

fn default_kinds() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_threads() -> usize {
    1
}

/// Which architectures to run and how to size them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ModelKind>,
    /// Reduction factor: hidden width `alpha I`, latent width `alpha^2 I`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Batch-tensor modes to compress, in order (mode 0 is the batch mode).
    /// Defaults to every sample mode.
    #[serde(default)]
    pub modes: Option<Vec<usize>>,
    /// Overrides the order-based skip-connection default of the mode-aware model.
    #[serde(default)]
    pub skip_connections: Option<bool>,
    /// Minimum latent features per sample; latent widths grow to reach it.
    #[serde(default)]
    pub min_latent: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kinds: default_kinds(),
            alpha: default_alpha(),
            modes: None,
            skip_connections: None,
            min_latent: None,
        }
    }
}

impl ModelSection {
    pub fn plan(&self, sample_shape: &[usize], alpha: f64) -> Result<ModePlan> {
        let plan = match &self.modes {
            Some(m) => ModePlan::with_alpha(sample_shape, m, alpha)?,
            None => ModePlan::all_modes(sample_shape, alpha)?,
        };
        match self.min_latent {
            Some(min) => plan.with_min_latent(sample_shape, min),
            None => Ok(plan),
        }
    }

    pub fn spec(&self, kind: ModelKind, sample_shape: &[usize], alpha: f64) -> Result<ModelSpec> {
        Ok(ModelSpec {
            kind,
            sample_shape: sample_shape.to_vec(),
            plan: self.plan(sample_shape, alpha)?,
            skip_connections: if kind == ModelKind::MaNtae {
                self.skip_connections
            } else {
                None
            },
            activation: Default::default(),
        })
    }

    fn check(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("model.kinds must name at least one model".into()));
        }
        Ok(())
    }
}

/// Replaces fields of the base `[train]` table for matching runs.
///
/// Selectors left out match everything. `minibatch = 0` selects full-set steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverride {
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub model: Option<ModelKind>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub minibatch: Option<usize>,
    #[serde(default)]
    pub lr: Option<f64>,
}

/// Training settings for one run: the base table with matching overrides applied in order.
pub fn resolve_train(
    base: &TrainConfig,
    overrides: &[TrainOverride],
    order: usize,
    dim: usize,
    kind: ModelKind,
) -> TrainConfig {
    let mut cfg = base.clone();
    for o in overrides {
        let hit =
            o.order.is_none_or(|v| v == order) && o.dim.is_none_or(|v| v == dim) && o.model.is_none_or(|v| v == kind);
        if !hit {
            continue;
        }
        if let Some(e) = o.epochs {
            cfg.epochs = e;
        }
        if let Some(mb) = o.minibatch {
            cfg.minibatch = (mb > 0).then_some(mb);
        }
        if let Some(lr) = o.lr {
            cfg.lr = lr;
        }
    }
    cfg
}

/// Seeds used by one run, all derived from the base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub data: u64,
    pub split: u64,
    pub model: u64,
    pub train: u64,
}

/// One trained model: configuration, sizes, loss curves and final scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub model: ModelKind,
    pub sample_shape: Vec<usize>,
    pub repeat: usize,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permuted_fraction: Option<f64>,
    pub seeds: RunSeeds,
    pub train: TrainConfig,
    pub param_count: u64,
    pub bias_count: u64,
    /// Parameters without biases.
    pub weight_count: u64,
    /// Multiply-accumulates of one forward pass over the training set.
    pub flops: u64,
    pub history: History,
    pub final_train_nmse: f64,
    pub final_test_nmse: f64,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl RunRecord {
    /// Copy with the wall-clock column cleared, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.history.epoch_seconds.clear();
        r
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        mean(&self.history.epoch_seconds)
    }
}

/// A named table written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Index of `column`, panicking on unknown names (a programming error).
    pub fn col(&self, column: &str) -> usize {
        self.columns
            .iter()
            .position(|c| c == column)
            .unwrap_or_else(|| panic!("no column {column} in table {}", self.name))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Everything one command produced.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    /// The configuration the command ran with, seeds included.
    pub config: Value,
    pub records: Vec<RunRecord>,
    pub tables: Vec<Table>,
    /// Files written while running (reconstructions, checkpoints).
    pub artifacts: Vec<PathBuf>,
}

impl Report {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
            records: Vec::new(),
            tables: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes `<command>.json`, `<command>_runs.csv` (when there are runs)
    /// and one CSV per table into `out_dir`. Returns the written paths.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let stem = self.command.replace('-', "_");
        let mut written = Vec::new();

        let json_path = out_dir.join(format!("{stem}.json"));
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
        written.push(json_path);

        if !self.records.is_empty() {
            let path = out_dir.join(format!("{stem}_runs.csv"));
            runs_table(&self.records).write_csv(&path)?;
            written.push(path);
        }
        for t in &self.tables {
            let path = out_dir.join(format!("{}.csv", t.name));
            t.write_csv(&path)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// One row per run with the final scores and sizes.
pub fn runs_table(records: &[RunRecord]) -> Table {
    let mut t = Table::new(
        "runs",
        &[
            "experiment",
            "model",
            "sample_shape",
            "repeat",
            "alpha",
            "permuted_fraction",
            "data_seed",
            "model_seed",
            "epochs",
            "minibatch",
            "lr",
            "param_count",
            "bias_count",
            "weight_count",
            "flops",
            "final_train_loss",
            "final_train_nmse",
            "final_test_nmse",
            "mean_epoch_seconds",
        ],
    );
    for r in records {
        t.push(vec![
            r.experiment.clone().into(),
            r.model.name().into(),
            shape_label(&r.sample_shape).into(),
            r.repeat.into(),
            r.alpha.into(),
            r.permuted_fraction.map_or(Value::Null, Value::from),
            r.seeds.data.into(),
            r.seeds.model.into(),
            r.train.epochs.into(),
            r.train.minibatch.map_or(Value::Null, Value::from),
            r.train.lr.into(),
            r.param_count.into(),
            r.bias_count.into(),
            r.weight_count.into(),
            r.flops.into(),
            r.history.train_loss.last().copied().map_or(Value::Null, Value::from),
            r.final_train_nmse.into(),
            r.final_test_nmse.into(),
            r.mean_epoch_seconds().into(),
        ]);
    }
    t
}

pub(crate) fn shape_label(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (zero for a single value).
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Runs `jobs` on up to `threads` worker threads and returns results in job
/// order. Every job must be self-contained (own seeds), so the output does
/// not depend on the thread count.
pub(crate) fn run_jobs<J, R, F>(jobs: &[J], threads: usize, f: F) -> Result<Vec<R>>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> Result<R> + Sync,
{
    let threads = threads.max(1).min(jobs.len().max(1));
    if threads == 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config::<ModelSection>("alpha = 0.5\nbogus = 1\n").unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("bogus")), "{err}");
    }

    #[test]
    fn overrides_apply_in_order() {
        let base = TrainConfig::new(10);
        let o = vec![
            TrainOverride {
                order: Some(4),
                dim: None,
                model: None,
                epochs: None,
                minibatch: Some(128),
                lr: None,
            },
            TrainOverride {
                order: Some(4),
                dim: None,
                model: Some(ModelKind::Dae),
                epochs: Some(3),
                minibatch: Some(0),
                lr: Some(0.1),
            },
        ];
        let a = resolve_train(&base, &o, 3, 20, ModelKind::Dae);
        assert_eq!(a, base);
        let b = resolve_train(&base, &o, 4, 20, ModelKind::Tfnn);
        assert_eq!(b.minibatch, Some(128));
        let c = resolve_train(&base, &o, 4, 20, ModelKind::Dae);
        assert_eq!((c.epochs, c.minibatch, c.lr), (3, None, 0.1));
    }

    #[test]
    fn jobs_keep_order_across_threads() {
        let jobs: Vec<u64> = (0..17).collect();
        let one = run_jobs(&jobs, 1, |&j| Ok(j * j)).unwrap();
        let four = run_jobs(&jobs, 4, |&j| Ok(j * j)).unwrap();
        assert_eq!(one, four);
        let err = run_jobs(
            &jobs,
            3,
            |&j| if j == 5 { Err(Error::Input("x".into())) } else { Ok(j) },
        );
        assert!(err.is_err());
    }

    #[test]
    fn stats() {
        assert_eq!(std_dev(&[0.3]), 0.0);
        assert!((std_dev(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
    }
}
