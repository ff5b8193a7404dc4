//! Compression-ratio sweep: one model per reduction factor, with the
//! reconstructed tensors written out.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{default_threads, run_jobs, shape_label, ModelSection, Report, RunRecord, RunSeeds, Table};
use crate::datagen::{synth_tucker_batch, train_test_split, Dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::io::{load_tensor, save_tensor};
use crate::metrics::nmse;
use crate::models::{Autoencoder, Model, ModelKind};
use crate::rng::{derive_seed, tag};
use crate::training::{evaluate_nmse, reconstruct_all, train, TrainConfig};

fn default_alphas() -> Vec<f64> {
    vec![0.5, 0.4, 0.3, 0.2]
}
fn default_train_fraction() -> f64 {
    0.8
}

/// Config of `compress`. Exactly one of `input` (an `NTT1` file) and
/// `synthetic` supplies the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SynthConfig>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Also write every reconstruction as `recon_<model>_a<alpha>.ntt`.
    #[serde(default = "yes")]
    pub write_reconstructions: bool,
    #[serde(default)]
    pub model: ModelSection,
    pub train: TrainConfig,
}

fn yes() -> bool {
    true
}

/// Loads the tensor named by `input` or synthesizes one from `synthetic`.
pub(crate) fn load_source(input: Option<&Path>, synthetic: Option<&SynthConfig>, base_seed: u64) -> Result<Dataset> {
    match (input, synthetic) {
        (Some(path), None) => {
            let x = load_tensor(path)?;
            if x.order() < 2 {
                return Err(Error::Input(format!(
                    "{}: need a batch mode plus sample modes, got order {}",
                    path.display(),
                    x.order()
                )));
            }
            Ok(Dataset::new(x))
        }
        (None, Some(s)) => {
            let mut s = s.clone();
            s.seed = derive_seed(base_seed, &[tag("data"), s.seed]);
            synth_tucker_batch(&s)
        }
        (Some(_), Some(_)) => Err(Error::Config("set only one of `input` and `synthetic`".into())),
        (None, None) => Err(Error::Config("no data: set `input` or a `[synthetic]` table".into())),
    }
}

pub const COMPRESS_COLUMNS: [&str; 12] = [
    "model",
    "alpha",
    "sample_shape",
    "latent_shape",
    "compression_ratio",
    "param_count",
    "param_overhead",
    "effective_ratio",
    "train_nmse",
    "test_nmse",
    "all_nmse",
    "reconstruction",
];

struct Outcome {
    record: RunRecord,
    row: Vec<serde_json::Value>,
    artifact: Option<PathBuf>,
}

/// Trains every model kind at every `alpha` and scores the reconstructions.
///
/// `compression_ratio` is input features over latent features per sample.
/// `param_overhead` is the parameter count over the stored latent values of
/// the whole batch, and `effective_ratio` charges the parameters to the
/// compressed size: `B * input / (B * latent + params)`.
pub fn compress(cfg: &CompressConfig, out_dir: Option<&Path>) -> Result<Report> {
    cfg.model.check()?;
    if cfg.alphas.is_empty() {
        return Err(Error::Config("alphas must be non-empty".into()));
    }
    let data = load_source(cfg.input.as_deref(), cfg.synthetic.as_ref(), cfg.seed)?;
    let sample_shape = data.noisy.sample_shape().to_vec();
    let split_seed = derive_seed(cfg.seed, &[tag("split")]);
    let (train_set, test_set) = train_test_split(&data, cfg.train_fraction, split_seed)?;
    cfg.train.validate(train_set.len())?;
    if cfg.write_reconstructions {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }

    let jobs: Vec<(ModelKind, f64)> = cfg
        .model
        .kinds
        .iter()
        .flat_map(|&k| cfg.alphas.iter().map(move |&a| (k, a)))
        .collect();
    let outcomes = run_jobs(&jobs, cfg.threads, |&(kind, alpha)| {
        let spec = cfg.model.spec(kind, &sample_shape, alpha)?;
        let model_seed = derive_seed(cfg.seed, &[tag("model"), tag(kind.name()), alpha.to_bits()]);
        let mut train_cfg = cfg.train.clone();
        train_cfg.seed = derive_seed(model_seed, &[tag("train"), cfg.train.seed]);
        let mut model = Model::build(&spec, model_seed)?;
        let history = train(&mut model, &train_set, Some(&test_set), &train_cfg)?;

        let recon = reconstruct_all(&model, &data.noisy)?;
        let all_nmse = nmse(&recon, data.reference())?;
        let artifact = match (cfg.write_reconstructions, out_dir) {
            (true, Some(dir)) => {
                let p = dir.join(format!("recon_{}_a{alpha}.ntt", kind.name()));
                save_tensor(&p, &recon)?;
                Some(p)
            }
            _ => None,
        };

        let latent_shape = spec.plan.latent_sample_shape(&sample_shape);
        let input_feat: usize = sample_shape.iter().product();
        let latent_feat: usize = latent_shape.iter().product();
        let b = data.len() as f64;
        let params = model.param_count() as u64;
        let stored = b * latent_feat as f64;
        let final_train = evaluate_nmse(&model, &train_set)?;
        let final_test = *history.test_nmse.last().expect("at least one epoch");
        let row = vec![
            kind.name().into(),
            alpha.into(),
            shape_label(&sample_shape).into(),
            shape_label(&latent_shape).into(),
            (input_feat as f64 / latent_feat as f64).into(),
            params.into(),
            (params as f64 / stored).into(),
            (b * input_feat as f64 / (stored + params as f64)).into(),
            final_train.into(),
            final_test.into(),
            all_nmse.into(),
            artifact
                .as_ref()
                .and_then(|p| p.file_name())
                .map_or(serde_json::Value::Null, |n| n.to_string_lossy().into_owned().into()),
        ];
        let bias_count = model.bias_count() as u64;
        let record = RunRecord {
            experiment: "compress".into(),
            model: kind,
            sample_shape: sample_shape.clone(),
            repeat: 0,
            alpha,
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
            history,
            final_train_nmse: final_train,
            final_test_nmse: final_test,
            train: train_cfg,
            metrics: [("all_nmse".to_string(), all_nmse)].into_iter().collect(),
        };
        Ok(Outcome { record, row, artifact })
    })?;

    let mut report = Report::new("compress", cfg)?;
    let mut table = Table::new("compress", &COMPRESS_COLUMNS);
    for o in outcomes {
        table.push(o.row);
        report.records.push(o.record);
        report.artifacts.extend(o.artifact);
    }
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::parse_config;
    use crate::io::load_tensor;

    const TINY: &str = r#"
        alphas = [0.5, 0.25]
        [synthetic]
        order = 3
        dim = 8
        batch = 16
        [model]
        kinds = ["ma-ntae"]
        [train]
        epochs = 2
        minibatch = 8
    "#;

    #[test]
    fn ratio_sixteen_at_half() {
        let mut cfg: CompressConfig = parse_config(TINY).unwrap();
        cfg.synthetic.as_mut().unwrap().dim = 20;
        cfg.alphas = vec![0.5];
        cfg.train.epochs = 1;
        let r = compress(&cfg, None).unwrap();
        let t = &r.tables[0];
        assert_eq!(t.rows[0][t.col("compression_ratio")], 16.0);
        assert_eq!(t.rows[0][t.col("latent_shape")], "5x5");
        assert!(r.artifacts.is_empty());
    }

    #[test]
    fn writes_reconstructions() {
        let dir = tempfile::tempdir().unwrap();
        let cfg: CompressConfig = parse_config(TINY).unwrap();
        let r = compress(&cfg, Some(dir.path())).unwrap();
        assert_eq!(r.tables[0].rows.len(), 2);
        assert_eq!(r.artifacts.len(), 2);
        let x = load_tensor(&r.artifacts[0]).unwrap();
        assert_eq!(x.shape(), &[16, 8, 8]);
    }

    #[test]
    fn data_source_must_be_unique() {
        let mut cfg: CompressConfig = parse_config(TINY).unwrap();
        cfg.input = Some("x.ntt".into());
        assert!(matches!(compress(&cfg, None), Err(Error::Config(_))));
        cfg.input = None;
        cfg.synthetic = None;
        assert!(matches!(compress(&cfg, None), Err(Error::Config(_))));
    }

    #[test]
    fn reads_tensor_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.ntt");
        save_tensor(&p, &crate::tensor::DenseTensor::random_normal(&[10, 4, 6], 3).unwrap()).unwrap();
        let mut cfg: CompressConfig = parse_config(TINY).unwrap();
        cfg.synthetic = None;
        cfg.input = Some(p);
        cfg.alphas = vec![0.5];
        let r = compress(&cfg, None).unwrap();
        let t = &r.tables[0];
        assert_eq!(t.rows[0][t.col("sample_shape")], "4x6");
    }
}
