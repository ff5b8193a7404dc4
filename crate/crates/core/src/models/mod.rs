//! Autoencoder architectures over batch-first tensors.
//!
//! Every model takes a tensor whose mode 0 is the sample (batch) mode and
//! reconstructs a tensor of the same shape. [`MaNtae`] compresses the
//! modes listed in a [`ModePlan`] one at a time (unfold, per-column MLP,
//! fold); [`Dae`] flattens each sample into a vector; [`Tfnn`] applies
//! per-mode factor matrices as mode products with activations in between.

mod complexity;
mod dae;
mod mantae;
mod plan;
mod tfnn;
mod tucker;

use serde::{Deserialize, Serialize};

pub use complexity::{bias_free_param_count, closed_form_counts, flop_count, ParamCounts};
pub use dae::Dae;
pub use mantae::{EncodedTensor, EncodedVars, MaNtae};
pub use plan::{stage_shapes, ModePlan, ModeSpec};
pub use tfnn::Tfnn;
pub use tucker::{hosvd, tucker_reconstruct, TuckerFactors};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;

/// Nonlinearity between the two linear maps of each block.
///
/// `Identity` exists so the linear (Tucker) special case can be checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn apply(self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => Ok(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "ma-ntae")]
    MaNtae,
    #[serde(rename = "tfnn")]
    Tfnn,
    #[serde(rename = "dae")]
    Dae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::MaNtae, ModelKind::Tfnn, ModelKind::Dae];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MaNtae => "ma-ntae",
            ModelKind::Tfnn => "tfnn",
            ModelKind::Dae => "dae",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ma-ntae" | "mantae" => Ok(ModelKind::MaNtae),
            "tfnn" => Ok(ModelKind::Tfnn),
            "dae" => Ok(ModelKind::Dae),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Everything needed to rebuild a model's structure (not its weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Extents of one sample (modes 1.. of the batch tensor).
    pub sample_shape: Vec<usize>,
    pub plan: ModePlan,
    /// MA-NTAE only; `None` picks the order-based default.
    #[serde(default)]
    pub skip_connections: Option<bool>,
    #[serde(default)]
    pub activation: Activation,
}

/// Common interface of the three autoencoders.
pub trait Autoencoder {
    fn kind(&self) -> ModelKind;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn spec(&self) -> ModelSpec;

    /// Records the reconstruction of the batch `x` on `tape`.
    fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var>;

    /// Records the encoder output for the batch `x`; mode 0 stays the batch mode.
    fn latent(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var>;

    /// Number of bias scalars among the trainable parameters.
    fn bias_count(&self) -> usize;

    fn param_count(&self) -> usize {
        self.params().scalar_count()
    }

    /// Reconstruction of a batch, evaluated without recording.
    fn reconstruct(&self, x: &DenseTensor) -> Result<DenseTensor> {
        let mut tape = Tape::no_grad(self.params());
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, xv)?;
        Ok(tape.value(out).clone())
    }

    /// Encoder output of a batch, evaluated without recording.
    fn encode_batch(&self, x: &DenseTensor) -> Result<DenseTensor> {
        let mut tape = Tape::no_grad(self.params());
        let xv = tape.constant(x.clone());
        let out = self.latent(&mut tape, xv)?;
        Ok(tape.value(out).clone())
    }
}

/// Any of the three architectures behind one type.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    MaNtae(MaNtae),
    Tfnn(Tfnn),
    Dae(Dae),
}

impl Model {
    /// Builds and initialises the model described by `spec`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Ok(match spec.kind {
            ModelKind::MaNtae => {
                let mut m = MaNtae::new(&spec.sample_shape, spec.plan.clone(), seed)?;
                if let Some(skip) = spec.skip_connections {
                    m.set_skip_connections(skip);
                }
                m.set_activation(spec.activation);
                Model::MaNtae(m)
            }
            ModelKind::Tfnn => {
                let mut m = Tfnn::new(&spec.sample_shape, spec.plan.clone(), seed)?;
                m.set_activation(spec.activation);
                Model::Tfnn(m)
            }
            ModelKind::Dae => {
                let mut m = Dae::new(&spec.sample_shape, &spec.plan, seed)?;
                m.set_activation(spec.activation);
                Model::Dae(m)
            }
        })
    }

    fn inner(&self) -> &dyn Autoencoder {
        match self {
            Model::MaNtae(m) => m,
            Model::Tfnn(m) => m,
            Model::Dae(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Autoencoder {
        match self {
            Model::MaNtae(m) => m,
            Model::Tfnn(m) => m,
            Model::Dae(m) => m,
        }
    }

    /// FLOP figure for a forward pass over `input_shape` (batch included).
    pub fn flop_count(&self, input_shape: &[usize]) -> Result<u64> {
        let spec = self.spec();
        flop_count(spec.kind, input_shape, &spec.plan)
    }
}

impl Autoencoder for Model {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn params(&self) -> &ParamStore {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.inner_mut().params_mut()
    }

    fn spec(&self) -> ModelSpec {
        self.inner().spec()
    }

    fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        self.inner().forward(tape, x)
    }

    fn latent(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        self.inner().latent(tape, x)
    }

    fn bias_count(&self) -> usize {
        self.inner().bias_count()
    }
}

/// He-scaled normal weights `N(0, 2 / fan_in)` for an `out x fan_in` matrix
/// whose output feeds a ReLU.
pub(crate) fn he_matrix(rng: &mut SeededRng, out: usize, fan_in: usize) -> DenseTensor {
    normal_matrix(rng, out, fan_in, 2.0)
}

/// `N(0, 1 / fan_in)` weights for a layer with no activation after it, so a
/// ReLU block keeps the second moment of its input instead of doubling it.
pub(crate) fn linear_out_matrix(rng: &mut SeededRng, out: usize, fan_in: usize) -> DenseTensor {
    normal_matrix(rng, out, fan_in, 1.0)
}

fn normal_matrix(rng: &mut SeededRng, out: usize, fan_in: usize, gain: f64) -> DenseTensor {
    let std = (gain / fan_in as f64).sqrt();
    let data = (0..out * fan_in).map(|_| std * rng.normal()).collect();
    DenseTensor::from_parts_unchecked(vec![out, fan_in], data)
}

pub(crate) fn zero_vector(len: usize) -> DenseTensor {
    DenseTensor::from_parts_unchecked(vec![len], vec![0.0; len])
}

/// Weights of one two-layer block applied column-wise to a mode unfolding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Block {
    pub w1: ParamId,
    pub b1: Option<ParamId>,
    pub w2: ParamId,
    pub b2: Option<ParamId>,
}

impl Block {
    /// Unfold `x` along `mode`, apply `W2 act(W1 Z + b1) + b2`, fold to `out_shape`.
    pub(crate) fn apply_on_mode(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        mode: usize,
        out_shape: &[usize],
        activation: Activation,
    ) -> Result<Var> {
        let z = tape.unfold(x, mode)?;
        let (w1, w2) = (tape.param(self.w1), tape.param(self.w2));
        let b1 = self.b1.map(|b| tape.param(b));
        let b2 = self.b2.map(|b| tape.param(b));
        let h = tape.fc(w1, b1, z)?;
        let h = activation.apply(tape, h)?;
        let y = tape.fc(w2, b2, h)?;
        tape.fold(y, mode, out_shape)
    }
}

/// Validates that `shape` is a batch of samples with `sample_shape`.
pub(crate) fn check_batch_shape(shape: &[usize], sample_shape: &[usize]) -> Result<()> {
    if shape.len() != sample_shape.len() + 1 || &shape[1..] != sample_shape {
        return Err(Error::Size(format!(
            "expected a batch of samples shaped {sample_shape:?}, got {shape:?}"
        )));
    }
    Ok(())
}

/// Full batch shape for `batch` samples.
pub(crate) fn batch_shape(batch: usize, sample_shape: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(sample_shape.len() + 1);
    s.push(batch);
    s.extend_from_slice(sample_shape);
    s
}
