//! Single-model `train` and `eval` commands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::compress::load_source;
use super::{Report, RunRecord, RunSeeds, Table};
use crate::datagen::{train_test_split, SynthConfig};
use crate::error::{Error, Result};
use crate::io::{load_tensor, save_tensor};
use crate::metrics::nmse;
use crate::models::{Autoencoder, Model, ModelKind, ModelSpec};
use crate::rng::{derive_seed, tag};
use crate::training::{
    evaluate_nmse, load_checkpoint, reconstruct_all, save_checkpoint, train_with_state, AdamState, TrainConfig,
};

fn default_kind() -> ModelKind {
    ModelKind::MaNtae
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_checkpoint() -> String {
    "model.ntck".into()
}

/// Architecture of the one model trained by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleModel {
    #[serde(default = "default_kind")]
    pub kind: ModelKind,
    #[serde(default = "super::default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub modes: Option<Vec<usize>>,
    #[serde(default)]
    pub skip_connections: Option<bool>,
    #[serde(default)]
    pub min_latent: Option<usize>,
}

impl Default for SingleModel {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            alpha: super::default_alpha(),
            modes: None,
            skip_connections: None,
            min_latent: None,
        }
    }
}

impl SingleModel {
    fn spec(&self, sample_shape: &[usize]) -> Result<ModelSpec> {
        super::ModelSection {
            kinds: vec![self.kind],
            alpha: self.alpha,
            modes: self.modes.clone(),
            skip_connections: self.skip_connections,
            min_latent: self.min_latent,
        }
        .spec(self.kind, sample_shape, self.alpha)
    }
}

/// Config of `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCommandConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SynthConfig>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// File name of the checkpoint inside the output directory.
    #[serde(default = "default_checkpoint")]
    pub checkpoint: String,
    #[serde(default)]
    pub model: SingleModel,
    pub train: TrainConfig,
}

/// Trains one model and, when `out_dir` is given, saves it with its
/// optimizer state as an `NTCK` checkpoint.
pub fn train_single(cfg: &TrainCommandConfig, out_dir: Option<&Path>) -> Result<Report> {
    let data = load_source(cfg.input.as_deref(), cfg.synthetic.as_ref(), cfg.seed)?;
    let sample_shape = data.noisy.sample_shape().to_vec();
    let split_seed = derive_seed(cfg.seed, &[tag("split")]);
    let (train_set, test_set) = train_test_split(&data, cfg.train_fraction, split_seed)?;
    let spec = cfg.model.spec(&sample_shape)?;
    let model_seed = derive_seed(cfg.seed, &[tag("model"), tag(cfg.model.kind.name())]);
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = derive_seed(model_seed, &[tag("train"), cfg.train.seed]);

    let mut model = Model::build(&spec, model_seed)?;
    let mut state = AdamState::new(model.params());
    let history = train_with_state(&mut model, &mut state, &train_set, Some(&test_set), &train_cfg)?;

    let mut report = Report::new("train", cfg)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(&cfg.checkpoint);
        save_checkpoint(&path, &model, Some(&state))?;
        report.artifacts.push(path);
    }
    let params = model.param_count() as u64;
    let bias_count = model.bias_count() as u64;
    report.records.push(RunRecord {
        experiment: "train".into(),
        model: cfg.model.kind,
        sample_shape,
        repeat: 0,
        alpha: cfg.model.alpha,
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
        metrics: Default::default(),
    });
    Ok(report)
}

#[derive(Serialize)]
struct EvalArgs<'a> {
    checkpoint: &'a Path,
    input: &'a Path,
    reference: Option<&'a Path>,
}

/// Reconstructs `input` with a saved model and scores it against
/// `reference` (or against the input itself). Writes the reconstruction to
/// `out_dir/reconstruction.ntt` when a directory is given.
pub fn eval(checkpoint: &Path, input: &Path, reference: Option<&Path>, out_dir: Option<&Path>) -> Result<Report> {
    let model = load_checkpoint(checkpoint)?.model;
    let x = load_tensor(input)?;
    let spec = model.spec();
    if x.order() < 2 || x.sample_shape() != spec.sample_shape.as_slice() {
        return Err(Error::Input(format!(
            "{}: sample shape {:?} does not match the model's {:?}",
            input.display(),
            x.shape().get(1..).unwrap_or_default(),
            spec.sample_shape
        )));
    }
    let r = match reference {
        Some(p) => {
            let r = load_tensor(p)?;
            if r.shape() != x.shape() {
                return Err(Error::Input(format!(
                    "{}: shape {:?} differs from the input's {:?}",
                    p.display(),
                    r.shape(),
                    x.shape()
                )));
            }
            r
        }
        None => x.clone(),
    };
    let xhat = reconstruct_all(&model, &x)?;
    let score = nmse(&xhat, &r)?;

    let mut report = Report::new(
        "eval",
        &EvalArgs {
            checkpoint,
            input,
            reference,
        },
    )?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("reconstruction.ntt");
        save_tensor(&path, &xhat)?;
        report.artifacts.push(path);
    }
    let latent: usize = spec.plan.latent_sample_shape(&spec.sample_shape).iter().product();
    let mut t = Table::new(
        "eval",
        &[
            "model",
            "samples",
            "latent_features",
            "param_count",
            "nmse",
            "scored_against",
        ],
    );
    t.push(vec![
        spec.kind.name().into(),
        x.batch_len().into(),
        latent.into(),
        (model.param_count() as u64).into(),
        score.into(),
        if reference.is_some() { "reference" } else { "input" }.into(),
    ]);
    report.tables.push(t);
    Ok(report)
}
