//! Flattening baseline: each sample becomes a vector of length
//! `D = prod I_n` and passes through `D -> h -> k -> h -> D` dense layers,
//! where `h` and `k` are the products of the plan's hidden and latent
//! widths (unencoded modes keep their extent).

use crate::autodiff::{ParamId, ParamStore, Reshape, Tape, Var};
use crate::error::Result;
use crate::rng::SeededRng;

use super::{
    check_batch_shape, he_matrix, linear_out_matrix, zero_vector, Activation, Autoencoder, ModePlan, ModelKind,
    ModelSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Dae {
    sample_shape: Vec<usize>,
    plan: ModePlan,
    widths: Vec<usize>,
    activation: Activation,
    params: ParamStore,
    layers: Vec<(ParamId, ParamId)>,
}

/// Layer widths `[D, h, k, h, D]` for a sample shape and plan.
pub(crate) fn dae_widths(sample_shape: &[usize], plan: &ModePlan) -> Vec<usize> {
    let d: usize = sample_shape.iter().product();
    let h: usize = plan.hidden_sample_shape(sample_shape).iter().product();
    let k: usize = plan.latent_sample_shape(sample_shape).iter().product();
    vec![d, h, k, h, d]
}

impl Dae {
    /// Builds the baseline sized from `plan` (normally the all-modes plan with the same factor).
    pub fn new(sample_shape: &[usize], plan: &ModePlan, seed: u64) -> Result<Self> {
        plan.validate(sample_shape)?;
        let widths = dae_widths(sample_shape, plan);
        let mut rng = SeededRng::new(seed);
        let mut params = ParamStore::new();
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let init = if i + 2 < widths.len() {
                    he_matrix
                } else {
                    linear_out_matrix
                };
                let wid = params.add(format!("layer{i}.w"), init(&mut rng, w[1], w[0]));
                let bid = params.add(format!("layer{i}.b"), zero_vector(w[1]));
                (wid, bid)
            })
            .collect();
        Ok(Self {
            sample_shape: sample_shape.to_vec(),
            plan: plan.clone(),
            widths,
            activation: Activation::Relu,
            params,
            layers,
        })
    }

    /// Baseline with every sample mode reduced by `alpha`.
    pub fn with_alpha(sample_shape: &[usize], alpha: f64, seed: u64) -> Result<Self> {
        Self::new(sample_shape, &ModePlan::all_modes(sample_shape, alpha)?, seed)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    /// Flattens `x` to a `D x B` matrix (one sample per column).
    fn columns(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        check_batch_shape(&shape, &self.sample_shape)?;
        let flat = tape.reshape(x, Reshape::Flat(vec![shape[0], self.widths[0]]))?;
        tape.reshape(flat, Reshape::Permute(vec![1, 0]))
    }

    fn layer(&self, tape: &mut Tape<'_>, i: usize, z: Var, activate: bool) -> Result<Var> {
        let (w, b) = self.layers[i];
        let (w, b) = (tape.param(w), tape.param(b));
        let y = tape.fc(w, Some(b), z)?;
        if activate {
            self.activation.apply(tape, y)
        } else {
            Ok(y)
        }
    }

    fn encode_columns(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let z = self.columns(tape, x)?;
        let z = self.layer(tape, 0, z, true)?;
        self.layer(tape, 1, z, true)
    }
}

impl Autoencoder for Dae {
    fn kind(&self) -> ModelKind {
        ModelKind::Dae
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::Dae,
            sample_shape: self.sample_shape.clone(),
            plan: self.plan.clone(),
            skip_connections: None,
            activation: self.activation,
        }
    }

    fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        let z = self.encode_columns(tape, x)?;
        let z = self.layer(tape, 2, z, true)?;
        let z = self.layer(tape, 3, z, false)?;
        let rows = tape.reshape(z, Reshape::Permute(vec![1, 0]))?;
        tape.reshape(rows, Reshape::Flat(shape))
    }

    /// Post-activation output of the second layer, as a `B x k` matrix.
    fn latent(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let z = self.encode_columns(tape, x)?;
        tape.reshape(z, Reshape::Permute(vec![1, 0]))
    }

    fn bias_count(&self) -> usize {
        self.widths[1..].iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;

    #[test]
    fn widths_for_twenty_by_twenty() {
        let m = Dae::with_alpha(&[20, 20], 0.5, 1).unwrap();
        assert_eq!(m.widths(), &[400, 100, 25, 100, 400]);
        assert_eq!(m.param_count(), 85_625);
    }

    #[test]
    fn zero_params_reconstruct_zero() {
        let mut m = Dae::with_alpha(&[6, 6], 0.5, 1).unwrap();
        let ids: Vec<_> = m.params.ids().collect();
        for id in ids {
            m.params.value_mut(id).data_mut().fill(0.0);
        }
        let x = DenseTensor::random_normal(&[3, 6, 6], 2).unwrap();
        let y = m.reconstruct(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn latent_is_batch_by_features() {
        let m = Dae::with_alpha(&[6, 6], 0.5, 1).unwrap();
        let x = DenseTensor::random_normal(&[3, 6, 6], 2).unwrap();
        assert_eq!(m.encode_batch(&x).unwrap().shape(), &[3, 4]);
    }

    #[test]
    fn rejects_wrong_sample_shape() {
        let m = Dae::with_alpha(&[6, 6], 0.5, 1).unwrap();
        let x = DenseTensor::random_normal(&[3, 6, 5], 2).unwrap();
        assert!(m.reconstruct(&x).is_err());
    }
}
