//! Synthetic data: noisy Tucker batches, mode-permutation corruption,
//! train/test splitting and a labeled blob generator for clustering runs.
//!
//! Batch tensors are batch-first: mode 0 indexes samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::orthonormalize_columns;
use crate::rng::{derive_seed, tag, SeededRng};
use crate::tensor::DenseTensor;

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

/// Generator settings for [`synth_tucker_batch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Order of the batch tensor, batch mode included.
    pub order: usize,
    /// Extent of every non-batch mode.
    pub dim: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Core extent per mode is `round(core_ratio * dim)`.
    #[serde(default = "default_core_ratio")]
    pub core_ratio: f64,
    /// Standard deviation of the entrywise perturbation added to each factor.
    #[serde(default = "default_factor_noise")]
    pub factor_noise: f64,
    /// Signal-to-noise ratio of the additive noise; `inf` disables it.
    #[serde(default = "default_snr_db")]
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
    /// Draw a fresh set of factors for every sample instead of one shared set.
    #[serde(default)]
    pub per_sample_factors: bool,
}

impl SynthConfig {
    pub fn new(order: usize, dim: usize, seed: u64) -> Self {
        Self {
            order,
            dim,
            batch: default_batch(),
            core_ratio: default_core_ratio(),
            factor_noise: default_factor_noise(),
            snr_db: default_snr_db(),
            seed,
            per_sample_factors: false,
        }
    }

    /// Extent of the generating core along each non-batch mode.
    pub fn core_dim(&self) -> usize {
        (self.core_ratio * self.dim as f64).round() as usize
    }

    pub fn sample_shape(&self) -> Vec<usize> {
        vec![self.dim; self.order.saturating_sub(1)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::Config(format!("order must be at least 2, got {}", self.order)));
        }
        if self.batch < 2 {
            return Err(Error::Config(format!("batch must be at least 2, got {}", self.batch)));
        }
        if !(self.core_ratio > 0.0 && self.core_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "core_ratio must lie in (0, 1], got {}",
                self.core_ratio
            )));
        }
        if self.core_dim() < 1 {
            return Err(Error::Config(format!(
                "core_ratio {} leaves no core for dim {}",
                self.core_ratio, self.dim
            )));
        }
        if !(self.factor_noise >= 0.0 && self.factor_noise.is_finite()) {
            return Err(Error::Config(format!(
                "factor_noise must be finite and >= 0, got {}",
                self.factor_noise
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid snr_db {}", self.snr_db)));
        }
        Ok(())
    }
}

/// A batch of samples with optional clean references and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub noisy: DenseTensor,
    pub clean: Option<DenseTensor>,
    pub labels: Option<Vec<usize>>,
    /// Sorted indices of samples whose modes were shuffled.
    pub permuted: Vec<usize>,
}

impl Dataset {
    pub fn new(noisy: DenseTensor) -> Self {
        Self {
            noisy,
            clean: None,
            labels: None,
            permuted: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.noisy.batch_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reference the reconstructions are scored against: clean when present.
    pub fn reference(&self) -> &DenseTensor {
        self.clean.as_ref().unwrap_or(&self.noisy)
    }

    /// The samples at `indices`, in order, with clean data and labels following.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let pos: Vec<Option<usize>> = {
            let mut p = vec![None; self.len()];
            for (k, &i) in indices.iter().enumerate() {
                if i < p.len() {
                    p[i] = Some(k);
                }
            }
            p
        };
        let mut permuted: Vec<usize> = self.permuted.iter().filter_map(|&i| pos[i]).collect();
        permuted.sort_unstable();
        Ok(Dataset {
            noisy: self.noisy.select_batch(indices)?,
            clean: self.clean.as_ref().map(|c| c.select_batch(indices)).transpose()?,
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            permuted,
        })
    }

    fn check(&self) -> Result<()> {
        if self.noisy.order() < 2 {
            return Err(Error::Shape(
                "datasets need a batch mode plus at least one sample mode".into(),
            ));
        }
        if let Some(c) = &self.clean {
            if c.shape() != self.noisy.shape() {
                return Err(Error::Shape(format!(
                    "clean shape {:?} differs from noisy shape {:?}",
                    c.shape(),
                    self.noisy.shape()
                )));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.len() {
                return Err(Error::Size(format!("{} labels for {} samples", l.len(), self.len())));
            }
        }
        Ok(())
    }
}

/// `rows x cols` matrix with orthonormal columns, from a Gaussian draw.
pub fn orthonormal_factor(rows: usize, cols: usize, seed: u64) -> Result<DenseTensor> {
    if cols == 0 || cols > rows {
        return Err(Error::Rank(format!(
            "cannot draw {cols} orthonormal columns in dimension {rows}"
        )));
    }
    let mut m = DenseTensor::random_normal(&[rows, cols], seed)?;
    orthonormalize_columns(m.data_mut(), rows, cols)?;
    Ok(m)
}

/// Factor set for one dataset (or one sample): orthonormal then perturbed.
fn perturbed_factors(cfg: &SynthConfig, seed: u64) -> Result<Vec<DenseTensor>> {
    let k = cfg.core_dim();
    (1..cfg.order)
        .map(|n| {
            let u = orthonormal_factor(cfg.dim, k, derive_seed(seed, &[n as u64]))?;
            if cfg.factor_noise == 0.0 {
                return Ok(u);
            }
            let noise = DenseTensor::random_normal(&[cfg.dim, k], derive_seed(seed, &[n as u64, tag("perturb")]))?;
            u.add(&noise.scale(cfg.factor_noise))
        })
        .collect()
}

/// Noisy Tucker batch: i.i.d. standard normal cores multiplied by perturbed
/// orthonormal factors along every non-batch mode, plus white noise at
/// `snr_db`.
pub fn synth_tucker_batch(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let k = cfg.core_dim();
    let mut core_shape = vec![cfg.batch];
    core_shape.extend(std::iter::repeat_n(k, cfg.order - 1));
    let cores = DenseTensor::random_normal(&core_shape, derive_seed(cfg.seed, &[tag("cores")]))?;
    let factor_seed = derive_seed(cfg.seed, &[tag("factors")]);

    let clean = if cfg.per_sample_factors {
        let sample_len: usize = cfg.sample_shape().iter().product();
        let mut data = Vec::with_capacity(cfg.batch * sample_len);
        for b in 0..cfg.batch {
            let factors = perturbed_factors(cfg, derive_seed(factor_seed, &[b as u64]))?;
            let mut x = DenseTensor::from_parts_unchecked(core_shape[1..].to_vec(), cores.sample(b).to_vec());
            for (n, u) in factors.iter().enumerate() {
                x = x.mode_product(u, n)?;
            }
            data.extend_from_slice(x.data());
        }
        let mut shape = vec![cfg.batch];
        shape.extend(cfg.sample_shape());
        DenseTensor::from_parts_unchecked(shape, data)
    } else {
        let factors = perturbed_factors(cfg, factor_seed)?;
        let mut x = cores;
        for (n, u) in factors.iter().enumerate() {
            x = x.mode_product(u, n + 1)?;
        }
        x
    };

    let noisy = if cfg.snr_db.is_infinite() {
        clean.clone()
    } else {
        add_awgn(&clean, cfg.snr_db, derive_seed(cfg.seed, &[tag("noise")]))?
    };
    Ok(Dataset {
        noisy,
        clean: Some(clean),
        labels: None,
        permuted: Vec::new(),
    })
}

/// `x` plus white Gaussian noise whose power is `10^(-snr_db/10)` times the
/// mean signal power. An infinite SNR returns `x` unchanged.
pub fn add_awgn(x: &DenseTensor, snr_db: f64, seed: u64) -> Result<DenseTensor> {
    let power = x.squared_norm();
    if power == 0.0 {
        return Err(Error::DegenerateInput(
            "cannot calibrate noise against an all-zero tensor".into(),
        ));
    }
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("invalid snr_db {snr_db}")));
    }
    let sigma = (power / (x.len() as f64 * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut rng = SeededRng::new(seed);
    let data = x.data().iter().map(|&v| v + sigma * rng.normal()).collect();
    DenseTensor::from_data(x.shape().to_vec(), data)
}

/// Uniformly random permutation of `0..n` other than the identity.
fn non_identity_permutation(rng: &mut SeededRng, n: usize) -> Vec<usize> {
    loop {
        let p = rng.permutation(n);
        if p.iter().enumerate().any(|(i, &v)| i != v) {
            return p;
        }
    }
}

/// Shuffles the sample modes of `ceil(fraction * B)` uniformly chosen
/// samples, each by its own uniformly drawn non-identity permutation.
/// Clean data receives the same permutation. The chosen indices are
/// recorded in [`Dataset::permuted`].
pub fn permute_modes_subset(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    data.check()?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "permutation fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let sample_shape = data.noisy.sample_shape().to_vec();
    if sample_shape.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Shape(format!(
            "mode permutation needs equal sample extents, got {sample_shape:?}"
        )));
    }
    let count = (fraction * data.len() as f64).ceil() as usize;
    if count == 0 {
        return Ok(data.clone());
    }
    if sample_shape.len() < 2 {
        return Err(Error::Shape(
            "samples with a single mode admit no mode permutation".into(),
        ));
    }
    let mut rng = SeededRng::new(seed);
    let mut chosen = rng.permutation(data.len());
    chosen.truncate(count);
    chosen.sort_unstable();

    let mut out = data.clone();
    for &b in &chosen {
        let perm = non_identity_permutation(&mut rng, sample_shape.len());
        let apply = |t: &mut DenseTensor| -> Result<()> {
            let s = DenseTensor::from_parts_unchecked(sample_shape.clone(), t.sample(b).to_vec());
            let p = s.permute(&perm)?;
            t.sample_mut(b).copy_from_slice(p.data());
            Ok(())
        };
        apply(&mut out.noisy)?;
        if let Some(c) = out.clean.as_mut() {
            apply(c)?;
        }
    }
    out.permuted = chosen;
    Ok(out)
}

/// Seeded split with `ceil(train_fraction * B)` training samples.
///
/// Indices are shuffled once. Unpermuted samples fill the sets in shuffled
/// order; permuted samples (see [`permute_modes_subset`]) alternate between
/// train and test so both sets see the same share of them. Without permuted
/// samples this is a plain shuffled split.
pub fn train_test_split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    data.check()?;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = data.len();
    let n_train = (train_fraction * n as f64).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} leaves an empty side for {n} samples"
        )));
    }
    let n_test = n - n_train;
    let order = SeededRng::new(seed).permutation(n);
    let mut is_permuted = vec![false; n];
    for &i in &data.permuted {
        is_permuted[i] = true;
    }

    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n_test));
    let permuted: Vec<usize> = order.iter().copied().filter(|&i| is_permuted[i]).collect();
    for (k, &i) in permuted.iter().enumerate() {
        let to_test = k % 2 == 1;
        if (to_test && test.len() < n_test) || train.len() >= n_train {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    for &i in order.iter().filter(|&&i| !is_permuted[i]) {
        if train.len() < n_train {
            train.push(i);
        } else {
            test.push(i);
        }
    }
    Ok((data.select(&train)?, data.select(&test)?))
}

/// Labeled Gaussian blobs with unit-variance isotropic noise. Class means
/// are `separation / sqrt(2)` times orthonormal random directions, so every
/// pair of means is `separation` apart. Labels cycle `0, 1, .., classes-1`.
pub fn labeled_blobs(
    sample_shape: &[usize],
    classes: usize,
    per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || per_class < 1 {
        return Err(Error::Config(format!(
            "need at least 2 classes and 1 sample per class, got {classes} x {per_class}"
        )));
    }
    let d: usize = sample_shape.iter().product();
    if d < classes {
        return Err(Error::Config(format!("{classes} classes do not fit in {d} features")));
    }
    let dirs = orthonormal_factor(d, classes, derive_seed(seed, &[tag("means")]))?;
    let scale = separation / std::f64::consts::SQRT_2;
    let mut rng = SeededRng::new(derive_seed(seed, &[tag("samples")]));
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for b in 0..n {
        let c = b % classes;
        labels.push(c);
        for r in 0..d {
            data.push(scale * dirs.data()[r * classes + c] + rng.normal());
        }
    }
    let mut shape = vec![n];
    shape.extend_from_slice(sample_shape);
    let mut ds = Dataset::new(DenseTensor::from_data(shape, data)?);
    ds.labels = Some(labels);
    Ok(ds)
}
