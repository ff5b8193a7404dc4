//! Clustering on learned latents, with k-means on the raw features as baseline.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::compress::load_source;
use super::{default_threads, mean, run_jobs, std_dev, ModelSection, Report, RunRecord, RunSeeds, Table};
use crate::datagen::{labeled_blobs, train_test_split, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::io::read_labels;
use crate::metrics::{kmeans, ClusteringScores};
use crate::models::{Autoencoder, Model, ModelKind};
use crate::rng::{derive_seed, tag};
use crate::tensor::DenseTensor;
use crate::training::{encode_all, evaluate_nmse, train, TrainConfig};

fn default_kinds() -> Vec<ModelKind> {
    vec![ModelKind::MaNtae]
}
fn default_min_latent() -> Option<usize> {
    Some(25)
}
fn default_repeats() -> usize {
    30
}
fn default_max_iter() -> usize {
    300
}
fn default_train_fraction() -> f64 {
    0.8
}

/// Labeled Gaussian blobs used when no tensor file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSection {
    pub sample_shape: Vec<usize>,
    pub classes: usize,
    pub per_class: usize,
    /// Distance between every pair of class means, in noise standard deviations.
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Config of `cluster`. Data comes from `input` plus the `labels` sidecar,
/// from `[synthetic]` plus `labels`, or from `[blobs]` (labels included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SynthConfig>,
    #[serde(default)]
    pub blobs: Option<BlobSection>,
    /// Number of clusters; defaults to the number of distinct labels.
    #[serde(default)]
    pub clusters: Option<usize>,
    /// Seeded k-means runs whose scores are averaged.
    #[serde(default = "default_repeats")]
    pub kmeans_repeats: usize,
    #[serde(default = "default_max_iter")]
    pub kmeans_max_iter: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ModelKind>,
    #[serde(default)]
    pub model: ClusterModelSection,
    pub train: TrainConfig,
}

/// [`ModelSection`] with a latent floor of 25 features by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterModelSection {
    #[serde(default = "super::default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub modes: Option<Vec<usize>>,
    #[serde(default)]
    pub skip_connections: Option<bool>,
    #[serde(default = "default_min_latent")]
    pub min_latent: Option<usize>,
}

impl Default for ClusterModelSection {
    fn default() -> Self {
        Self {
            alpha: super::default_alpha(),
            modes: None,
            skip_connections: None,
            min_latent: default_min_latent(),
        }
    }
}

impl ClusterModelSection {
    fn section(&self, kinds: &[ModelKind]) -> ModelSection {
        ModelSection {
            kinds: kinds.to_vec(),
            alpha: self.alpha,
            modes: self.modes.clone(),
            skip_connections: self.skip_connections,
            min_latent: self.min_latent,
        }
    }
}

fn load(cfg: &ClusterConfig) -> Result<Dataset> {
    let mut data = match &cfg.blobs {
        Some(b) => {
            if cfg.input.is_some() || cfg.synthetic.is_some() {
                return Err(Error::Config(
                    "set only one of `input`, `[synthetic]` and `[blobs]`".into(),
                ));
            }
            let seed = derive_seed(cfg.seed, &[tag("data"), b.seed]);
            labeled_blobs(&b.sample_shape, b.classes, b.per_class, b.separation, seed)?
        }
        None => load_source(cfg.input.as_deref(), cfg.synthetic.as_ref(), cfg.seed)?,
    };
    if let Some(path) = &cfg.labels {
        let labels = read_labels(path)?;
        if labels.len() != data.len() {
            return Err(Error::Input(format!(
                "{}: {} labels for {} samples",
                path.display(),
                labels.len(),
                data.len()
            )));
        }
        data.labels = Some(labels);
    }
    if data.labels.is_none() {
        return Err(Error::Input(
            "clustering needs class labels: pass a label sidecar file".into(),
        ));
    }
    Ok(data)
}

/// Mean and population std of each index over `repeats` seeded k-means runs.
fn score(points: &DenseTensor, truth: &[usize], k: usize, cfg: &ClusterConfig, seed: u64) -> Result<[(f64, f64); 4]> {
    let mut runs: [Vec<f64>; 4] = Default::default();
    for r in 0..cfg.kmeans_repeats {
        let fit = kmeans(
            points,
            k,
            1,
            cfg.kmeans_max_iter,
            derive_seed(seed, &[tag("kmeans"), r as u64]),
        )?;
        let s = ClusteringScores::compute(&fit.assignment, truth)?;
        for (v, x) in runs.iter_mut().zip([s.accuracy, s.ari, s.nmi, s.purity]) {
            v.push(x);
        }
    }
    Ok(runs.map(|v| (mean(&v), std_dev(&v))))
}

pub const CLUSTER_COLUMNS: [&str; 12] = [
    "features",
    "dim",
    "accuracy_mean",
    "accuracy_std",
    "ari_mean",
    "ari_std",
    "nmi_mean",
    "nmi_std",
    "purity_mean",
    "purity_std",
    "test_nmse",
    "kmeans_repeats",
];

/// Trains each model on reconstruction loss alone, encodes every sample and
/// clusters the flattened latents. The first row clusters the raw inputs.
pub fn cluster(cfg: &ClusterConfig) -> Result<Report> {
    if cfg.kinds.is_empty() || cfg.kmeans_repeats == 0 {
        return Err(Error::Config(
            "kinds must be non-empty and kmeans_repeats positive".into(),
        ));
    }
    let data = load(cfg)?;
    let truth = data.labels.clone().expect("checked by load");
    let k = match cfg.clusters {
        Some(k) => k,
        None => truth.iter().max().map_or(0, |m| m + 1),
    };
    let n = data.len();
    let sample_shape = data.noisy.sample_shape().to_vec();
    let flat = data.noisy.reshape(&[n, data.noisy.len() / n])?;
    let split_seed = derive_seed(cfg.seed, &[tag("split")]);
    let (train_set, test_set) = train_test_split(&data, cfg.train_fraction, split_seed)?;
    cfg.train.validate(train_set.len())?;
    let section = cfg.model.section(&cfg.kinds);

    let mut table = Table::new("cluster", &CLUSTER_COLUMNS);
    let push = |table: &mut Table, name: &str, dim: usize, s: [(f64, f64); 4], nmse: Option<f64>| {
        let mut row: Vec<serde_json::Value> = vec![name.into(), dim.into()];
        for (m, sd) in s {
            row.push(m.into());
            row.push(sd.into());
        }
        row.push(nmse.map_or(serde_json::Value::Null, Into::into));
        row.push(cfg.kmeans_repeats.into());
        table.push(row);
    };
    let baseline = score(&flat, &truth, k, cfg, derive_seed(cfg.seed, &[tag("baseline")]))?;
    push(&mut table, "all-features", flat.shape()[1], baseline, None);

    let results = run_jobs(&cfg.kinds, cfg.threads, |&kind| {
        let spec = section.spec(kind, &sample_shape, section.alpha)?;
        let model_seed = derive_seed(cfg.seed, &[tag("model"), tag(kind.name())]);
        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = derive_seed(model_seed, &[tag("train"), cfg.train.seed]);
        let mut model = Model::build(&spec, model_seed)?;
        let history = train(&mut model, &train_set, Some(&test_set), &train_cfg)?;
        let z = encode_all(&model, &data.noisy)?;
        let s = score(&z, &truth, k, cfg, derive_seed(model_seed, &[tag("cluster")]))?;
        let params = model.param_count() as u64;
        let bias_count = model.bias_count() as u64;
        let names = ["accuracy", "ari", "nmi", "purity"];
        let record = RunRecord {
            experiment: "cluster".into(),
            model: kind,
            sample_shape: sample_shape.clone(),
            repeat: 0,
            alpha: section.alpha,
            permuted_fraction: None,
            seeds: RunSeeds {
                data: cfg.seed,
                split: split_seed,
                model: model_seed,
                train: train_cfg.seed,
            },
            param_count: params,
            bias_count,
            weight_count: params - bias_count,
            flops: model.flop_count(train_set.noisy.shape())?,
            final_train_nmse: evaluate_nmse(&model, &train_set)?,
            final_test_nmse: *history.test_nmse.last().expect("at least one epoch"),
            history,
            train: train_cfg,
            metrics: names.iter().zip(s).map(|(n, (m, _))| (n.to_string(), m)).collect(),
        };
        Ok((record, z.shape()[1], s))
    })?;

    let mut report = Report::new("cluster", cfg)?;
    for (record, dim, s) in results {
        push(&mut table, record.model.name(), dim, s, Some(record.final_test_nmse));
        report.records.push(record);
    }
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::parse_config;
    use crate::io::{save_tensor, write_labels};

    const BLOBS: &str = r#"
        kmeans_repeats = 3
        [blobs]
        sample_shape = [6, 6]
        classes = 2
        per_class = 20
        separation = 20.0
        [model]
        min_latent = 4
        [train]
        epochs = 30
        minibatch = 8
        lr = 0.003
    "#;

    #[test]
    fn separated_blobs_cluster_perfectly() {
        let cfg: ClusterConfig = parse_config(BLOBS).unwrap();
        let r = cluster(&cfg).unwrap();
        let t = &r.tables[0];
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0][t.col("features")], "all-features");
        assert_eq!(t.rows[0][t.col("accuracy_mean")], 1.0);
        assert_eq!(t.rows[1][t.col("accuracy_mean")], 1.0);
        assert_eq!(r.records[0].metrics["ari"], 1.0);
    }

    #[test]
    fn min_latent_defaults_to_25() {
        let cfg: ClusterConfig = parse_config("[train]\nepochs = 1\n").unwrap();
        assert_eq!(cfg.model.min_latent, Some(25));
    }

    #[test]
    fn missing_labels_is_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ntt");
        save_tensor(&p, &DenseTensor::random_normal(&[8, 3, 3], 1).unwrap()).unwrap();
        let mut cfg: ClusterConfig = parse_config("[train]\nepochs = 1\n").unwrap();
        cfg.input = Some(p);
        assert!(matches!(cluster(&cfg), Err(Error::Input(_))));

        let l = dir.path().join("labels.txt");
        write_labels(&l, &[0, 1, 0]).unwrap();
        cfg.labels = Some(l);
        assert!(matches!(cluster(&cfg), Err(Error::Input(_))));
    }
}
