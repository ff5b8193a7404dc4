//! Synthetic benchmark and mode-permutation study.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    default_threads, mean, resolve_train, run_jobs, std_dev, ModelSection, Report, RunRecord, RunSeeds, Table,
    TrainOverride,
};
use crate::datagen::{permute_modes_subset, synth_tucker_batch, train_test_split, SynthConfig};
use crate::error::{Error, Result};
use crate::models::{Autoencoder, Model, ModelKind};
use crate::rng::{derive_seed, tag};
use crate::training::{evaluate_nmse, train, TrainConfig};

fn default_orders() -> Vec<usize> {
    vec![3]
}
fn default_dims() -> Vec<usize> {
    vec![20]
}
fn default_batch() -> usize {
    512
}
fn default_core_ratio() -> f64 {
    0.25
}
fn default_factor_noise() -> f64 {
    0.05
}
fn default_snr_db() -> f64 {
    30.0
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_repeats() -> usize {
    5
}
fn default_fractions() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3]
}

/// Synthetic data grid: every combination of `orders` and `dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Batch-tensor orders (batch mode included).
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_core_ratio")]
    pub core_ratio: f64,
    #[serde(default = "default_factor_noise")]
    pub factor_noise: f64,
    #[serde(default = "default_snr_db")]
    pub snr_db: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub per_sample_factors: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            orders: default_orders(),
            dims: default_dims(),
            batch: default_batch(),
            core_ratio: default_core_ratio(),
            factor_noise: default_factor_noise(),
            snr_db: default_snr_db(),
            train_fraction: default_train_fraction(),
            per_sample_factors: false,
        }
    }
}

impl DataSection {
    fn synth(&self, order: usize, dim: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            order,
            dim,
            batch: self.batch,
            core_ratio: self.core_ratio,
            factor_noise: self.factor_noise,
            snr_db: self.snr_db,
            seed,
            per_sample_factors: self.per_sample_factors,
        }
    }

    fn check(&self) -> Result<()> {
        if self.orders.is_empty() || self.dims.is_empty() {
            return Err(Error::Config("data.orders and data.dims must be non-empty".into()));
        }
        for &o in &self.orders {
            for &d in &self.dims {
                self.synth(o, d, 0).validate()?;
            }
        }
        Ok(())
    }
}

/// Config of `synth-benchmark`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthBenchmarkConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Worker threads for independent runs; results do not depend on it.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    pub train: TrainConfig,
    #[serde(default)]
    pub train_override: Vec<TrainOverride>,
}

/// Config of `permutation-study`: the benchmark settings plus the permuted fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermutationStudyConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    pub train: TrainConfig,
    #[serde(default)]
    pub train_override: Vec<TrainOverride>,
}

impl PermutationStudyConfig {
    fn benchmark(&self) -> SynthBenchmarkConfig {
        SynthBenchmarkConfig {
            seed: self.seed,
            repeats: self.repeats,
            threads: self.threads,
            data: self.data.clone(),
            model: self.model.clone(),
            train: self.train.clone(),
            train_override: self.train_override.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    order: usize,
    dim: usize,
    kind: ModelKind,
    repeat: usize,
    fraction: Option<f64>,
}

/// Seeds of one run. The permuted fraction only enters the permutation
/// stream, so fraction 0 reproduces the plain benchmark run exactly.
fn seeds(base: u64, train_salt: u64, job: &Job) -> (RunSeeds, u64) {
    let dims = [job.order as u64, job.dim as u64, job.repeat as u64];
    let data = derive_seed(base, &[tag("data"), dims[0], dims[1], dims[2]]);
    let model = derive_seed(base, &[tag("model"), tag(job.kind.name()), dims[0], dims[1], dims[2]]);
    let permute = derive_seed(data, &[tag("permute"), job.fraction.unwrap_or(0.0).to_bits()]);
    (
        RunSeeds {
            data,
            split: derive_seed(data, &[tag("split")]),
            model,
            train: derive_seed(model, &[tag("train"), train_salt]),
        },
        permute,
    )
}

fn run_trial(cfg: &SynthBenchmarkConfig, experiment: &str, job: &Job) -> Result<RunRecord> {
    let mut train_cfg = resolve_train(&cfg.train, &cfg.train_override, job.order, job.dim, job.kind);
    let (seeds, permute_seed) = seeds(cfg.seed, train_cfg.seed, job);
    train_cfg.seed = seeds.train;

    let synth = cfg.data.synth(job.order, job.dim, seeds.data);
    let mut data = synth_tucker_batch(&synth)?;
    if let Some(f) = job.fraction {
        data = permute_modes_subset(&data, f, permute_seed)?;
    }
    let (train_set, test_set) = train_test_split(&data, cfg.data.train_fraction, seeds.split)?;

    let sample_shape = synth.sample_shape();
    let spec = cfg.model.spec(job.kind, &sample_shape, cfg.model.alpha)?;
    let mut model = Model::build(&spec, seeds.model)?;
    let history = train(&mut model, &train_set, Some(&test_set), &train_cfg)?;
    let param_count = model.param_count() as u64;
    let bias_count = model.bias_count() as u64;
    Ok(RunRecord {
        experiment: experiment.to_string(),
        model: job.kind,
        sample_shape,
        repeat: job.repeat,
        alpha: cfg.model.alpha,
        permuted_fraction: job.fraction,
        seeds,
        param_count,
        bias_count,
        weight_count: param_count - bias_count,
        flops: model.flop_count(train_set.noisy.shape())?,
        final_train_nmse: evaluate_nmse(&model, &train_set)?,
        final_test_nmse: *history.test_nmse.last().expect("at least one epoch"),
        history,
        train: train_cfg,
        metrics: Default::default(),
    })
}

fn check(cfg: &SynthBenchmarkConfig) -> Result<()> {
    cfg.data.check()?;
    cfg.model.check()?;
    if cfg.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    for &order in &cfg.data.orders {
        for &dim in &cfg.data.dims {
            let shape = vec![dim; order - 1];
            cfg.model.plan(&shape, cfg.model.alpha)?;
            for &kind in &cfg.model.kinds {
                let n_train = (cfg.data.train_fraction * cfg.data.batch as f64).ceil() as usize;
                resolve_train(&cfg.train, &cfg.train_override, order, dim, kind).validate(n_train)?;
            }
        }
    }
    Ok(())
}

fn jobs(cfg: &SynthBenchmarkConfig, fractions: &[Option<f64>]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &order in &cfg.data.orders {
        for &dim in &cfg.data.dims {
            for &fraction in fractions {
                for &kind in &cfg.model.kinds {
                    for repeat in 0..cfg.repeats {
                        jobs.push(Job {
                            order,
                            dim,
                            kind,
                            repeat,
                            fraction,
                        });
                    }
                }
            }
        }
    }
    jobs
}

const SUMMARY_COLUMNS: [&str; 12] = [
    "order",
    "dim",
    "permuted_fraction",
    "model",
    "repeats",
    "test_nmse_mean",
    "test_nmse_std",
    "train_nmse_mean",
    "param_count",
    "weight_count",
    "flops",
    "epoch_seconds_mean",
];

fn summary(name: &str, records: &[RunRecord], repeats: usize) -> Table {
    let mut t = Table::new(name, &SUMMARY_COLUMNS);
    for group in records.chunks(repeats) {
        let first = &group[0];
        let test: Vec<f64> = group.iter().map(|r| r.final_test_nmse).collect();
        let train: Vec<f64> = group.iter().map(|r| r.final_train_nmse).collect();
        let secs: Vec<f64> = group.iter().map(|r| r.mean_epoch_seconds()).collect();
        t.push(vec![
            (first.sample_shape.len() + 1).into(),
            first.sample_shape[0].into(),
            first.permuted_fraction.map_or(Value::Null, Value::from),
            first.model.name().into(),
            group.len().into(),
            mean(&test).into(),
            std_dev(&test).into(),
            mean(&train).into(),
            first.param_count.into(),
            first.weight_count.into(),
            first.flops.into(),
            mean(&secs).into(),
        ]);
    }
    t
}

/// For every (order, dim, model, repeat): generate a noisy Tucker batch,
/// split it, train, and score the test reconstructions against clean data.
/// The summary table holds mean and standard deviation over repeats.
pub fn synth_benchmark(cfg: &SynthBenchmarkConfig) -> Result<Report> {
    check(cfg)?;
    let jobs = jobs(cfg, &[None]);
    let records = run_jobs(&jobs, cfg.threads, |j| run_trial(cfg, "synth-benchmark", j))?;
    let mut report = Report::new("synth-benchmark", cfg)?;
    report
        .tables
        .push(summary("synth_benchmark_summary", &records, cfg.repeats));
    report.records = records;
    Ok(report)
}

/// The benchmark protocol with a share of samples mode-permuted before the
/// split, for every fraction in `cfg.fractions`.
pub fn permutation_study(cfg: &PermutationStudyConfig) -> Result<Report> {
    let bench = cfg.benchmark();
    check(&bench)?;
    if cfg.fractions.is_empty() || cfg.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Config(
            "fractions must be a non-empty list of values in [0, 1]".into(),
        ));
    }
    if bench.data.orders.contains(&2) {
        return Err(Error::Config("mode permutation needs order >= 3".into()));
    }
    let fractions: Vec<Option<f64>> = cfg.fractions.iter().map(|&f| Some(f)).collect();
    let jobs = jobs(&bench, &fractions);
    let records = run_jobs(&jobs, cfg.threads, |j| run_trial(&bench, "permutation-study", j))?;
    let mut report = Report::new("permutation-study", cfg)?;
    report
        .tables
        .push(summary("permutation_study_summary", &records, cfg.repeats));
    report.records = records;
    Ok(report)
}
