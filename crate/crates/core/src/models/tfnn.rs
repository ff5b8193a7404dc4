//! Tucker-factorised baseline: per-mode factor matrices applied as mode
//! products (no biases), with the activation between the `I -> H` and
//! `H -> K` factors of each stage. Shapes follow the same plan as
//! [`MaNtae`](super::MaNtae); there are no skip connections.

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::Result;
use crate::rng::SeededRng;

use super::plan::stage_shapes;
use super::{
    check_batch_shape, he_matrix, linear_out_matrix, Activation, Autoencoder, Block, ModePlan, ModelKind, ModelSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Tfnn {
    sample_shape: Vec<usize>,
    plan: ModePlan,
    activation: Activation,
    params: ParamStore,
    encoders: Vec<Block>,
    decoders: Vec<Block>,
}

impl Tfnn {
    pub fn new(sample_shape: &[usize], plan: ModePlan, seed: u64) -> Result<Self> {
        plan.validate(sample_shape)?;
        let mut rng = SeededRng::new(seed);
        let mut params = ParamStore::new();
        let mut encoders = Vec::new();
        for (l, s) in plan.stages().iter().enumerate() {
            encoders.push(Block {
                w1: params.add(format!("enc{l}.v"), he_matrix(&mut rng, s.hidden, s.input)),
                b1: None,
                w2: params.add(format!("enc{l}.w"), linear_out_matrix(&mut rng, s.latent, s.hidden)),
                b2: None,
            });
        }
        let mut decoders = Vec::new();
        for (l, s) in plan.stages().iter().enumerate() {
            decoders.push(Block {
                w1: params.add(format!("dec{l}.v"), he_matrix(&mut rng, s.hidden, s.latent)),
                b1: None,
                w2: params.add(format!("dec{l}.w"), linear_out_matrix(&mut rng, s.input, s.hidden)),
                b2: None,
            });
        }
        Ok(Self {
            sample_shape: sample_shape.to_vec(),
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

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    fn encode_vars(&self, tape: &mut Tape<'_>, x: Var) -> Result<(Var, Vec<Vec<usize>>)> {
        let shapes = stage_shapes(tape.value(x).shape(), &self.plan)?;
        check_batch_shape(&shapes[0], &self.sample_shape)?;
        let mut cur = x;
        for (l, (s, block)) in self.plan.stages().iter().zip(&self.encoders).enumerate() {
            cur = block.apply_on_mode(tape, cur, s.mode, &shapes[l + 1], self.activation)?;
        }
        Ok((cur, shapes))
    }
}

impl Autoencoder for Tfnn {
    fn kind(&self) -> ModelKind {
        ModelKind::Tfnn
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::Tfnn,
            sample_shape: self.sample_shape.clone(),
            plan: self.plan.clone(),
            skip_connections: None,
            activation: self.activation,
        }
    }

    fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let (mut cur, shapes) = self.encode_vars(tape, x)?;
        for (l, (s, block)) in self.plan.stages().iter().zip(&self.decoders).enumerate().rev() {
            cur = block.apply_on_mode(tape, cur, s.mode, &shapes[l], self.activation)?;
        }
        Ok(cur)
    }

    fn latent(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        Ok(self.encode_vars(tape, x)?.0)
    }

    fn bias_count(&self) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{stage_shapes, MaNtae, ModeSpec};
    use crate::tensor::DenseTensor;

    #[test]
    fn selection_factors_pass_nonnegative_input() {
        // V keeps the first H rows, W the first K: nonnegative entries survive the ReLU.
        let sample = [4, 4];
        let spec = |mode| ModeSpec {
            mode,
            input: 4,
            hidden: 3,
            latent: 2,
        };
        let plan = ModePlan::new(&sample, vec![spec(1), spec(2)]).unwrap();
        let mut m = Tfnn::new(&sample, plan, 1).unwrap();
        for l in 0..2 {
            let b = m.encoders[l];
            let v = m.params.value_mut(b.w1);
            v.data_mut().fill(0.0);
            for i in 0..3 {
                v.data_mut()[i * 4 + i] = 1.0;
            }
            let w = m.params.value_mut(b.w2);
            w.data_mut().fill(0.0);
            for i in 0..2 {
                w.data_mut()[i * 3 + i] = 1.0;
            }
        }
        let x = DenseTensor::random_normal(&[2, 4, 4], 3).unwrap().map(f64::abs);
        let core = m.encode_batch(&x).unwrap();
        for b in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(core.get(&[b, i, j]).unwrap(), x.get(&[b, i, j]).unwrap());
                }
            }
        }
        // negative inputs are clipped by the activation
        let neg = x.scale(-1.0);
        assert!(m.encode_batch(&neg).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shapes_match_mantae() {
        let sample = [20, 20, 20];
        let plan = ModePlan::all_modes(&sample, 0.5).unwrap();
        let t = Tfnn::new(&sample, plan.clone(), 1).unwrap();
        let m = MaNtae::new(&sample, plan.clone(), 1).unwrap();
        let x = DenseTensor::random_normal(&[2, 20, 20, 20], 1).unwrap();
        let want = stage_shapes(x.shape(), &plan).unwrap();
        assert_eq!(t.encode_batch(&x).unwrap().shape(), want.last().unwrap().as_slice());
        assert_eq!(m.encode_batch(&x).unwrap().shape(), want.last().unwrap().as_slice());
        assert_eq!(t.reconstruct(&x).unwrap().shape(), x.shape());
    }

    #[test]
    fn no_biases() {
        let plan = ModePlan::all_modes(&[20, 20], 0.5).unwrap();
        let t = Tfnn::new(&[20, 20], plan, 1).unwrap();
        assert_eq!(t.bias_count(), 0);
        assert_eq!(t.param_count(), 2 * (10 * 20 + 5 * 10) * 2);
    }
}
