//! Adam, the training loop, evaluation and `NTCK` checkpoints.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::io::{decode_tensor, encode_tensor, Dtype, Reader};
use crate::models::{Autoencoder, Model, ModelSpec};
use crate::rng::{derive_seed, tag, SeededRng};
use crate::tensor::DenseTensor;

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_true() -> bool {
    true
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// First and second moments for every parameter of a store, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<DenseTensor>,
    pub v: Vec<DenseTensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| p.value.map(|_| 0.0)).collect::<Vec<_>>();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    fn check(&self, store: &ParamStore) -> Result<()> {
        let ok = self.m.len() == store.len()
            && self.v.len() == store.len()
            && store.iter().all(|(id, p)| {
                self.m[id.index()].shape() == p.value.shape() && self.v[id.index()].shape() == p.value.shape()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Size("optimizer state does not match the parameter store".into()))
        }
    }
}

/// One bias-corrected Adam step on a single tensor. `step` is the 1-based
/// step index.
pub fn adam_step(value: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], step: u64, hyper: &AdamConfig) {
    let c1 = 1.0 - hyper.beta1.powf(step as f64);
    let c2 = 1.0 - hyper.beta2.powf(step as f64);
    for (((x, &g), m), v) in value.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        *x -= hyper.lr * (*m / c1) / ((*v / c2).sqrt() + hyper.eps);
    }
}

/// Applies one Adam step to every parameter using the accumulated gradients.
pub fn adam_update(store: &mut ParamStore, state: &mut AdamState, hyper: &AdamConfig) -> Result<()> {
    state.check(store)?;
    state.step += 1;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let i = id.index();
        let (value, grad) = store.value_and_grad(id);
        adam_step(
            value.data_mut(),
            grad.data(),
            state.m[i].data_mut(),
            state.v[i].data_mut(),
            state.step,
            hyper,
        );
    }
    Ok(())
}

/// Settings of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Samples per step; `None` trains on the whole set each step.
    #[serde(default)]
    pub minibatch: Option<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn new(epochs: usize) -> Self {
        Self {
            epochs,
            minibatch: None,
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            seed: 0,
            shuffle: true,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if let Some(mb) = self.minibatch {
            if mb == 0 || mb > train_len {
                return Err(Error::Config(format!(
                    "minibatch {mb} must lie in 1..={train_len} (training set size)"
                )));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config("Adam eps must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Mean minibatch loss `(1/B) sum ||xhat_b - x_b||^2` over the epoch.
    pub train_loss: Vec<f64>,
    /// Training-set NMSE against the inputs, from the same minibatch passes.
    pub train_nmse: Vec<f64>,
    /// Test-set NMSE after the epoch (against clean data when present).
    pub test_nmse: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

impl History {
    pub fn len(&self) -> usize {
        self.train_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_loss.is_empty()
    }
}

fn check_model_input<M: Autoencoder + ?Sized>(model: &M, data: &Dataset) -> Result<()> {
    let spec = model.spec();
    if data.noisy.sample_shape() != spec.sample_shape.as_slice() {
        return Err(Error::Size(format!(
            "dataset samples {:?} do not match the model's sample shape {:?}",
            data.noisy.sample_shape(),
            spec.sample_shape
        )));
    }
    Ok(())
}

/// Trains from a fresh optimizer state. See [`train_with_state`].
pub fn train<M: Autoencoder + ?Sized>(
    model: &mut M,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<History> {
    let mut state = AdamState::new(model.params());
    train_with_state(model, &mut state, train_set, test_set, cfg)
}

/// Minimizes the batch reconstruction loss of the noisy inputs with Adam.
///
/// Each epoch visits the training set once in an order drawn from
/// `(cfg.seed, epoch)`, so a run is bitwise reproducible. A non-finite loss
/// aborts with [`Error::Divergence`]. Gradient accumulators are left zeroed.
pub fn train_with_state<M: Autoencoder + ?Sized>(
    model: &mut M,
    state: &mut AdamState,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<History> {
    let n = train_set.len();
    cfg.validate(n)?;
    check_model_input(model, train_set)?;
    if let Some(t) = test_set {
        check_model_input(model, t)?;
    }
    state.check(model.params())?;
    let mb = cfg.minibatch.unwrap_or(n);
    let train_power = train_set.noisy.squared_norm();
    if train_power == 0.0 {
        return Err(Error::DegenerateInput("training inputs are all zero".into()));
    }

    let adam = cfg.adam();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        // A single full-set step does not depend on sample order.
        let order: Vec<usize> = if cfg.shuffle && mb < n {
            SeededRng::new(derive_seed(cfg.seed, &[tag("epoch-order"), epoch as u64])).permutation(n)
        } else {
            (0..n).collect()
        };
        let (mut loss_sum, mut sq_err, mut batches) = (0.0, 0.0, 0usize);
        for (k, chunk) in order.chunks(mb).enumerate() {
            let x = if chunk.len() == n {
                train_set.noisy.clone()
            } else {
                train_set.noisy.select_batch(chunk)?
            };
            let grads = {
                let mut tape = Tape::new(model.params());
                let xv = tape.constant(x);
                let out = model.forward(&mut tape, xv)?;
                let loss = tape.mse_loss(out, xv)?;
                let value = tape.value(loss).data()[0];
                if !value.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        minibatch: k,
                        loss: value,
                    });
                }
                loss_sum += value;
                sq_err += value * chunk.len() as f64;
                batches += 1;
                tape.backward(loss)?
            };
            let store = model.params_mut();
            store.set_grads(grads)?;
            adam_update(store, state, &adam)?;
        }
        history.train_loss.push(loss_sum / batches as f64);
        history.train_nmse.push(sq_err / train_power);
        if let Some(t) = test_set {
            history.test_nmse.push(evaluate_nmse(model, t)?);
        }
        history.epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    model.params_mut().zero_grad();
    Ok(history)
}

const EVAL_CHUNK: usize = 256;

/// NMSE of the reconstruction of `data.noisy` against `data.reference()`,
/// pooled over the whole set.
pub fn evaluate_nmse<M: Autoencoder + ?Sized>(model: &M, data: &Dataset) -> Result<f64> {
    check_model_input(model, data)?;
    let reference = data.reference();
    let (mut err, mut power) = (0.0, 0.0);
    let n = data.len();
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let (x, r) = if idx.len() == n {
            (data.noisy.clone(), reference.clone())
        } else {
            (data.noisy.select_batch(&idx)?, reference.select_batch(&idx)?)
        };
        let xhat = model.reconstruct(&x)?;
        err += xhat.sub(&r)?.squared_norm();
        power += r.squared_norm();
    }
    if power == 0.0 {
        return Err(Error::DegenerateInput("reference tensor has zero norm".into()));
    }
    Ok(err / power)
}

/// Model reconstruction of every sample, in chunks.
pub fn reconstruct_all<M: Autoencoder + ?Sized>(model: &M, x: &DenseTensor) -> Result<DenseTensor> {
    map_chunks(x, |c| model.reconstruct(c))
}

/// Flattened encoder output of every sample, as a `B x features` matrix.
pub fn encode_all<M: Autoencoder + ?Sized>(model: &M, x: &DenseTensor) -> Result<DenseTensor> {
    let z = map_chunks(x, |c| model.encode_batch(c))?;
    let b = z.shape()[0];
    let f = z.len() / b;
    z.reshape(&[b, f])
}

fn map_chunks(x: &DenseTensor, f: impl Fn(&DenseTensor) -> Result<DenseTensor>) -> Result<DenseTensor> {
    let n = x.batch_len();
    if n <= EVAL_CHUNK {
        return f(x);
    }
    let mut shape = None;
    let mut data = Vec::new();
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let y = f(&x.select_batch(&idx)?)?;
        shape.get_or_insert_with(|| y.shape().to_vec());
        data.extend_from_slice(y.data());
    }
    let mut shape = shape.unwrap();
    shape[0] = n;
    DenseTensor::from_data(shape, data)
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NTCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    model: ModelSpec,
}

/// A restored model with its optimizer state, when one was saved.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<AdamState>,
}

/// Writes an `NTCK` checkpoint.
///
/// Layout, integers little-endian: magic `NTCK`, version u16, u32 length and
/// bytes of a JSON header holding the model spec, u64 optimizer step, u8
/// optimizer flag, u32 entry count, then per entry a u16-length name, u8
/// order, u64 extents and the u64 absolute offset of its payload. Payloads
/// follow as `NTT1` blobs (parameters, then first and second moments named
/// `adam.m/<name>` and `adam.v/<name>`). A CRC32 of all preceding bytes
/// closes the file.
pub fn save_checkpoint(path: impl AsRef<Path>, model: &Model, optimizer: Option<&AdamState>) -> Result<()> {
    let path = path.as_ref();
    let store = model.params();
    if let Some(s) = optimizer {
        s.check(store)?;
    }
    let mut entries: Vec<(String, &DenseTensor)> = store.iter().map(|(_, p)| (p.name.clone(), &p.value)).collect();
    if let Some(s) = optimizer {
        for (id, p) in store.iter() {
            entries.push((format!("adam.m/{}", p.name), &s.m[id.index()]));
        }
        for (id, p) in store.iter() {
            entries.push((format!("adam.v/{}", p.name), &s.v[id.index()]));
        }
    }

    let header = serde_json::to_vec(&CheckpointHeader { model: model.spec() })
        .map_err(|e| Error::Config(format!("cannot serialize model spec: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&optimizer.map_or(0, |s| s.step).to_le_bytes());
    out.push(u8::from(optimizer.is_some()));
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());

    let blobs: Vec<Vec<u8>> = entries.iter().map(|(_, t)| encode_tensor(t, Dtype::F64)).collect();
    let manifest_len: usize = entries
        .iter()
        .map(|(name, t)| 2 + name.len() + 1 + 8 * t.order() + 8)
        .sum();
    let mut offset = (out.len() + manifest_len) as u64;
    for ((name, t), blob) in entries.iter().zip(&blobs) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.order() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += blob.len() as u64;
    }
    for blob in &blobs {
        out.extend_from_slice(blob);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an `NTCK` checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 {
        return Err(Error::format(0, "file too short for a checkpoint"));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "bad magic, expected NTCK"));
    }
    let body_len = bytes.len() - 4;
    let mut r = Reader::new(&bytes[..body_len], 0);
    r.take(4, "magic")?;
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    if bytes.len() < 10 {
        return Err(Error::format(bytes.len() as u64, "truncated checkpoint"));
    }
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    if crc32fast::hash(&bytes[..body_len]) != stored {
        return Err(Error::format(body_len as u64, "checkpoint checksum mismatch"));
    }

    let header_len = r.u32("header length")? as usize;
    let header_at = r.offset();
    let header: CheckpointHeader = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| Error::format(header_at, format!("bad header: {e}")))?;
    let step = r.u64("optimizer step")?;
    let has_opt = r.u8("optimizer flag")? != 0;
    let count = r.u32("entry count")? as usize;

    let mut model = Model::build(&header.model, 0).map_err(|e| Error::format(header_at, e.to_string()))?;
    let mut optimizer = has_opt.then(|| AdamState::new(model.params()));
    if let Some(s) = optimizer.as_mut() {
        s.step = step;
    }

    let mut seen = vec![[false; 3]; model.params().len()];
    for _ in 0..count {
        let entry_at = r.offset();
        let name_len = r.u16("entry name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "entry name")?)
            .map_err(|_| Error::format(entry_at, "entry name is not UTF-8"))?
            .to_string();
        let order = r.u8("entry order")? as usize;
        let mut shape = Vec::with_capacity(order);
        for _ in 0..order {
            shape.push(r.u64("entry extents")? as usize);
        }
        let offset = r.u64("entry offset")?;
        let start = usize::try_from(offset)
            .ok()
            .filter(|&o| o < body_len)
            .ok_or_else(|| Error::format(entry_at, format!("entry {name}: offset {offset} out of range")))?;
        let (t, _) = decode_tensor(&bytes[start..body_len], offset)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::format(
                offset,
                format!(
                    "entry {name}: manifest shape {shape:?} differs from payload {:?}",
                    t.shape()
                ),
            ));
        }

        let (slot, pname) = if let Some(p) = name.strip_prefix("adam.m/") {
            (1, p)
        } else if let Some(p) = name.strip_prefix("adam.v/") {
            (2, p)
        } else {
            (0, name.as_str())
        };
        let id = model
            .params()
            .find(pname)
            .ok_or_else(|| Error::format(entry_at, format!("unknown parameter {pname}")))?;
        if model.params().value(id).shape() != t.shape() {
            return Err(Error::format(
                offset,
                format!("parameter {pname} has the wrong shape {:?}", t.shape()),
            ));
        }
        let target = match (slot, optimizer.as_mut()) {
            (0, _) => model.params_mut().value_mut(id),
            (1, Some(s)) => &mut s.m[id.index()],
            (2, Some(s)) => &mut s.v[id.index()],
            _ => {
                return Err(Error::format(
                    entry_at,
                    format!("optimizer entry {name} without optimizer state"),
                ))
            }
        };
        *target = t;
        seen[id.index()][slot] = true;
    }
    let slots = if has_opt { 3 } else { 1 };
    if let Some((i, _)) = seen.iter().enumerate().find(|(_, s)| s[..slots].iter().any(|&x| !x)) {
        return Err(Error::format(
            r.offset(),
            format!(
                "checkpoint lacks entries for parameter {}",
                model.params().iter().nth(i).map_or("?", |(_, p)| p.name.as_str())
            ),
        ));
    }
    Ok(Checkpoint { model, optimizer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{synth_tucker_batch, train_test_split, SynthConfig};
    use crate::models::{ModePlan, ModelKind};

    fn toy_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a", DenseTensor::from_data(vec![2], vec![1.0, -1.0]).unwrap());
        s.add("b", DenseTensor::from_data(vec![2], vec![1.0, -1.0]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = toy_store();
        let before = s.clone();
        let mut st = AdamState::new(&s);
        adam_update(&mut s, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(s.value(s.find("a").unwrap()), before.value(before.find("a").unwrap()));
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let (mut x, mut m, mut v) = ([0.0], [0.0], [0.0]);
        let hyper = AdamConfig::default();
        adam_step(&mut x, &[3.0], &mut m, &mut v, 1, &hyper);
        assert!((x[0] + hyper.lr).abs() < 1e-6 * hyper.lr + 1e-12);
        let (mut y, mut m2, mut v2) = ([0.0], [0.0], [0.0]);
        adam_step(&mut y, &[3.0], &mut m2, &mut v2, 1, &hyper);
        assert_eq!(x, y);
    }

    fn tiny_data(seed: u64) -> (Dataset, Dataset) {
        let cfg = SynthConfig {
            batch: 32,
            factor_noise: 0.0,
            snr_db: f64::INFINITY,
            ..SynthConfig::new(3, 8, seed)
        };
        train_test_split(&synth_tucker_batch(&cfg).unwrap(), 0.75, 1).unwrap()
    }

    fn tiny_model(kind: ModelKind) -> Model {
        let spec = ModelSpec {
            kind,
            sample_shape: vec![8, 8],
            plan: ModePlan::all_modes(&[8, 8], 0.5).unwrap(),
            skip_connections: None,
            activation: Default::default(),
        };
        Model::build(&spec, 4).unwrap()
    }

    #[test]
    fn zero_lr_keeps_model() {
        let (tr, te) = tiny_data(1);
        let mut m = tiny_model(ModelKind::MaNtae);
        let before = m.clone();
        let mut cfg = TrainConfig::new(3);
        cfg.lr = 0.0;
        let h = train(&mut m, &tr, Some(&te), &cfg).unwrap();
        assert_eq!(m, before);
        assert!(h.train_loss.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(h.test_nmse.len(), 3);
    }

    #[test]
    fn deterministic_history() {
        let (tr, te) = tiny_data(2);
        let mut cfg = TrainConfig::new(4);
        cfg.minibatch = Some(8);
        let run = || {
            let mut m = tiny_model(ModelKind::Tfnn);
            let h = train(&mut m, &tr, Some(&te), &cfg).unwrap();
            (m, h.train_loss, h.test_nmse)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn minibatch_too_large_is_rejected() {
        let (tr, _) = tiny_data(3);
        let mut cfg = TrainConfig::new(1);
        cfg.minibatch = Some(tr.len() + 1);
        let mut m = tiny_model(ModelKind::Dae);
        assert!(matches!(train(&mut m, &tr, None, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let (mut tr, _) = tiny_data(3);
        tr.noisy = tr.noisy.scale(1e200);
        let mut m = tiny_model(ModelKind::Dae);
        match train(&mut m, &tr, None, &TrainConfig::new(2)) {
            Err(Error::Divergence {
                epoch: 0, minibatch: 0, ..
            }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_model_scores_one() {
        let (_, te) = tiny_data(4);
        let mut m = tiny_model(ModelKind::Dae);
        let ids: Vec<_> = m.params().ids().collect();
        for id in ids {
            m.params_mut().value_mut(id).data_mut().fill(0.0);
        }
        assert_eq!(evaluate_nmse(&m, &te).unwrap(), 1.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (tr, te) = tiny_data(5);
        let dir = tempfile::tempdir().unwrap();
        for kind in ModelKind::ALL {
            let mut m = tiny_model(kind);
            let mut st = AdamState::new(m.params());
            train_with_state(&mut m, &mut st, &tr, None, &TrainConfig::new(2)).unwrap();
            let p = dir.path().join(format!("{kind}.ntck"));
            save_checkpoint(&p, &m, Some(&st)).unwrap();
            let ck = load_checkpoint(&p).unwrap();
            assert_eq!(ck.model, m);
            assert_eq!(ck.optimizer.as_ref(), Some(&st));
            assert_eq!(
                evaluate_nmse(&ck.model, &te).unwrap().to_bits(),
                evaluate_nmse(&m, &te).unwrap().to_bits()
            );

            save_checkpoint(&p, &m, None).unwrap();
            assert!(load_checkpoint(&p).unwrap().optimizer.is_none());

            let mut bytes = fs::read(&p).unwrap();
            let mid = bytes.len() / 2;
            bytes[mid] ^= 0x40;
            fs::write(&p, &bytes).unwrap();
            assert!(matches!(load_checkpoint(&p), Err(Error::Format { .. })));
            bytes[0] = b'X';
            fs::write(&p, &bytes).unwrap();
            assert!(matches!(load_checkpoint(&p), Err(Error::Format { offset: 0, .. })));
        }
        assert!(matches!(
            load_checkpoint(dir.path().join("none")),
            Err(Error::Io { .. })
        ));
    }
}
