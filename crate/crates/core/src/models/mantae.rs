//! The mode-aware non-linear Tucker autoencoder.
//!
//! Encoding walks the plan's modes in order. Stage `l` unfolds the current
//! tensor along mode `s_l`, applies `FC_K(act(FC_H(.)))` to every column
//! and folds the result back with extent `K_{s_l}` in place of `I_{s_l}`.
//! Decoding walks the stages in reverse with separate weights, mapping
//! `K -> H -> I`. With skip connections on, the input of encoder stage `l`
//! is added to the output of decoder stage `l`.

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;

use super::plan::stage_shapes;
use super::{
    batch_shape, check_batch_shape, he_matrix, linear_out_matrix, zero_vector, Activation, Autoencoder, Block,
    ModePlan, ModelKind, ModelSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MaNtae {
    sample_shape: Vec<usize>,
    plan: ModePlan,
    skip_connections: bool,
    activation: Activation,
    params: ParamStore,
    encoders: Vec<Block>,
    decoders: Vec<Block>,
}

/// Tape handles produced by [`MaNtae::encode_vars`].
#[derive(Debug, Clone)]
pub struct EncodedVars {
    pub core: Var,
    /// Input of every encoder stage, kept only when skip connections are on.
    pub cache: Option<Vec<Var>>,
}

/// Value-level result of [`MaNtae::encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTensor {
    pub core: DenseTensor,
    pub cache: Option<Vec<DenseTensor>>,
}

impl MaNtae {
    /// Builds the model for samples shaped `sample_shape`.
    ///
    /// Skip connections default to on when a sample has three or more modes
    /// (batch tensors of order four and up). Layers feeding a ReLU get
    /// `N(0, 2/fan_in)` weights, block outputs `N(0, 1/fan_in)`; biases
    /// start at zero.
    pub fn new(sample_shape: &[usize], plan: ModePlan, seed: u64) -> Result<Self> {
        plan.validate(sample_shape)?;
        let mut rng = SeededRng::new(seed);
        let mut params = ParamStore::new();
        let mut encoders = Vec::with_capacity(plan.len());
        for (l, s) in plan.stages().iter().enumerate() {
            encoders.push(Block {
                w1: params.add(format!("enc{l}.w1"), he_matrix(&mut rng, s.hidden, s.input)),
                b1: Some(params.add(format!("enc{l}.b1"), zero_vector(s.hidden))),
                w2: params.add(format!("enc{l}.w2"), linear_out_matrix(&mut rng, s.latent, s.hidden)),
                b2: Some(params.add(format!("enc{l}.b2"), zero_vector(s.latent))),
            });
        }
        let mut decoders = Vec::with_capacity(plan.len());
        for (l, s) in plan.stages().iter().enumerate() {
            decoders.push(Block {
                w1: params.add(format!("dec{l}.w1"), he_matrix(&mut rng, s.hidden, s.latent)),
                b1: Some(params.add(format!("dec{l}.b1"), zero_vector(s.hidden))),
                w2: params.add(format!("dec{l}.w2"), linear_out_matrix(&mut rng, s.input, s.hidden)),
                b2: Some(params.add(format!("dec{l}.b2"), zero_vector(s.input))),
            });
        }
        Ok(Self {
            sample_shape: sample_shape.to_vec(),
            skip_connections: sample_shape.len() >= 3,
            plan,
            activation: Activation::Relu,
            params,
            encoders,
            decoders,
        })
    }

    pub fn plan(&self) -> &ModePlan {
        &self.plan
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn skip_connections(&self) -> bool {
        self.skip_connections
    }

    pub fn set_skip_connections(&mut self, on: bool) {
        self.skip_connections = on;
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    /// Composite linear map `W2 W1` of encoder stage `l` (meaningful with identity activation).
    pub fn encoder_product(&self, l: usize) -> Result<DenseTensor> {
        let b = self.encoders[l];
        self.params.value(b.w2).matmul(self.params.value(b.w1))
    }

    /// Records the encoder on `tape`.
    pub fn encode_vars(&self, tape: &mut Tape<'_>, x: Var) -> Result<EncodedVars> {
        let shapes = stage_shapes(tape.value(x).shape(), &self.plan)?;
        check_batch_shape(&shapes[0], &self.sample_shape)?;
        let mut cache = self.skip_connections.then(Vec::new);
        let mut cur = x;
        for (l, (s, block)) in self.plan.stages().iter().zip(&self.encoders).enumerate() {
            if let Some(c) = cache.as_mut() {
                c.push(cur);
            }
            cur = block.apply_on_mode(tape, cur, s.mode, &shapes[l + 1], self.activation)?;
        }
        Ok(EncodedVars { core: cur, cache })
    }

    /// Records the decoder on `tape`, starting from a latent core.
    pub fn decode_vars(&self, tape: &mut Tape<'_>, core: Var, cache: Option<&[Var]>) -> Result<Var> {
        let batch = tape.value(core).shape()[0];
        let shapes = stage_shapes(&batch_shape(batch, &self.sample_shape), &self.plan)?;
        if tape.value(core).shape() != shapes.last().unwrap().as_slice() {
            return Err(Error::Size(format!(
                "latent core {:?} does not match the plan's latent shape {:?}",
                tape.value(core).shape(),
                shapes.last().unwrap()
            )));
        }
        let cache = match (self.skip_connections, cache) {
            (true, None) => {
                return Err(Error::Usage(
                    "skip connections are on: decoding needs the encoder cache".into(),
                ))
            }
            (true, Some(c)) if c.len() != self.plan.len() => {
                return Err(Error::Usage(format!(
                    "encoder cache has {} entries, expected {}",
                    c.len(),
                    self.plan.len()
                )))
            }
            (true, Some(c)) => Some(c),
            (false, _) => None,
        };
        let mut cur = core;
        for (l, (s, block)) in self.plan.stages().iter().zip(&self.decoders).enumerate().rev() {
            cur = block.apply_on_mode(tape, cur, s.mode, &shapes[l], self.activation)?;
            if let Some(c) = cache {
                cur = tape.add(cur, c[l])?;
            }
        }
        Ok(cur)
    }

    /// Latent core (and the skip cache, when skips are on) of a batch.
    pub fn encode(&self, x: &DenseTensor) -> Result<EncodedTensor> {
        let mut tape = Tape::no_grad(&self.params);
        let xv = tape.constant(x.clone());
        let enc = self.encode_vars(&mut tape, xv)?;
        Ok(EncodedTensor {
            core: tape.value(enc.core).clone(),
            cache: enc.cache.map(|c| c.iter().map(|&v| tape.value(v).clone()).collect()),
        })
    }

    /// Reconstruction from a latent core. `cache` is required when skips are on.
    pub fn decode(&self, core: &DenseTensor, cache: Option<&[DenseTensor]>) -> Result<DenseTensor> {
        let mut tape = Tape::no_grad(&self.params);
        let cv = tape.constant(core.clone());
        let cache_vars: Option<Vec<Var>> = cache.map(|c| c.iter().map(|t| tape.constant(t.clone())).collect());
        let out = self.decode_vars(&mut tape, cv, cache_vars.as_deref())?;
        Ok(tape.value(out).clone())
    }

    #[cfg(test)]
    pub(crate) fn encoders(&self) -> &[Block] {
        &self.encoders
    }
}

impl Autoencoder for MaNtae {
    fn kind(&self) -> ModelKind {
        ModelKind::MaNtae
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::MaNtae,
            sample_shape: self.sample_shape.clone(),
            plan: self.plan.clone(),
            skip_connections: Some(self.skip_connections),
            activation: self.activation,
        }
    }

    fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let enc = self.encode_vars(tape, x)?;
        self.decode_vars(tape, enc.core, enc.cache.as_deref())
    }

    fn latent(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        Ok(self.encode_vars(tape, x)?.core)
    }

    fn bias_count(&self) -> usize {
        self.plan
            .stages()
            .iter()
            .map(|s| 2 * s.hidden + s.latent + s.input)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(sample: &[usize], modes: &[usize], seed: u64) -> MaNtae {
        let plan = ModePlan::with_alpha(sample, modes, 0.5).unwrap();
        MaNtae::new(sample, plan, seed).unwrap()
    }

    fn zero_params(m: &mut MaNtae, prefix: &str) {
        let ids: Vec<_> = m
            .params
            .iter()
            .filter(|(_, p)| p.name.starts_with(prefix))
            .map(|(id, _)| id)
            .collect();
        for id in ids {
            m.params.value_mut(id).data_mut().fill(0.0);
        }
    }

    #[test]
    fn skip_default_follows_order() {
        assert!(!model(&[6, 6], &[1, 2], 1).skip_connections());
        assert!(model(&[4, 4, 4, 4], &[1, 2, 3, 4], 1).skip_connections());
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(model(&[6, 6], &[1, 2], 3), model(&[6, 6], &[1, 2], 3));
        assert_ne!(model(&[6, 6], &[1, 2], 3), model(&[6, 6], &[1, 2], 4));
    }

    #[test]
    fn core_shape_contract() {
        let m = model(&[20, 20], &[1, 2], 1);
        let x = DenseTensor::random_normal(&[3, 20, 20], 2).unwrap();
        let enc = m.encode(&x).unwrap();
        assert_eq!(enc.core.shape(), &[3, 5, 5]);
        assert!(enc.cache.is_none());
        let xhat = m.decode(&enc.core, None).unwrap();
        assert_eq!(xhat.shape(), x.shape());
    }

    #[test]
    fn zero_params_give_zero_core() {
        let mut m = model(&[6, 6], &[1, 2], 1);
        zero_params(&mut m, "");
        let x = DenseTensor::random_normal(&[2, 6, 6], 2).unwrap();
        assert!(m.encode(&x).unwrap().core.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_decoder_without_skips_outputs_zero() {
        let mut m = model(&[6, 6], &[1, 2], 1);
        zero_params(&mut m, "dec");
        let x = DenseTensor::random_normal(&[2, 6, 6], 2).unwrap();
        assert!(m.reconstruct(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_decoder_with_skips_returns_input() {
        // The last decoder stage emits zero and adds the cached Z_0 = X;
        // earlier stages only feed it, so the output is exactly X.
        let mut m = model(&[4, 4, 4], &[1, 2, 3], 1);
        zero_params(&mut m, "dec");
        let x = DenseTensor::random_normal(&[2, 4, 4, 4], 2).unwrap();
        assert_eq!(m.reconstruct(&x).unwrap(), x);
    }

    #[test]
    fn decode_without_cache_is_usage_error_with_skips() {
        let m = model(&[4, 4, 4], &[1, 2, 3], 1);
        let x = DenseTensor::random_normal(&[2, 4, 4, 4], 2).unwrap();
        let core = m.encode(&x).unwrap().core;
        assert!(matches!(m.decode(&core, None), Err(Error::Usage(_))));
    }

    #[test]
    fn single_stage_is_direct_composition() {
        let m = model(&[6, 5], &[2], 9);
        let x = DenseTensor::random_normal(&[3, 6, 5], 4).unwrap();
        let b = m.encoders()[0];
        let p = |id| m.params.value(id).clone();
        let z = x.unfold(2).unwrap();
        let mut h = p(b.w1).matmul(&z).unwrap();
        let (hb, j) = (p(b.b1.unwrap()), h.shape()[1]);
        for (i, row) in h.data_mut().chunks_mut(j).enumerate() {
            row.iter_mut().for_each(|v| *v = (*v + hb.data()[i]).max(0.0));
        }
        let mut y = p(b.w2).matmul(&h).unwrap();
        let yb = p(b.b2.unwrap());
        for (i, row) in y.data_mut().chunks_mut(j).enumerate() {
            row.iter_mut().for_each(|v| *v += yb.data()[i]);
        }
        let k = m.plan().stages()[0].latent;
        let want = DenseTensor::fold(&y, 2, &[3, 6, k]).unwrap();
        assert_eq!(m.encode(&x).unwrap().core, want);
    }

    #[test]
    fn wrong_input_shape() {
        let m = model(&[6, 6], &[1, 2], 1);
        let x = DenseTensor::random_normal(&[2, 6, 5], 2).unwrap();
        assert!(m.encode(&x).is_err());
    }
}
