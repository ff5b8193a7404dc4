//! Closed-form parameter and FLOP counts.
//!
//! These never allocate a model, so they can be evaluated for sizes far
//! beyond what fits in memory (the parameter sweep relies on that).

use serde::Serialize;

use crate::error::Result;

use super::dae::dae_widths;
use super::plan::stage_shapes;
use super::{ModePlan, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCounts {
    /// All trainable scalars.
    pub total: u64,
    /// Bias scalars included in `total`.
    pub biases: u64,
}

impl ParamCounts {
    pub fn weights(&self) -> u64 {
        self.total - self.biases
    }
}

/// Bias-free size of the mode-aware model: `2 * sum_s H_s (I_s + K_s)`.
pub fn bias_free_param_count(plan: &ModePlan) -> u64 {
    plan.stages()
        .iter()
        .map(|s| 2 * (s.hidden * (s.input + s.latent)) as u64)
        .sum()
}

/// Parameter counts of `kind` built for `sample_shape` and `plan`.
pub fn closed_form_counts(kind: ModelKind, sample_shape: &[usize], plan: &ModePlan) -> Result<ParamCounts> {
    plan.validate(sample_shape)?;
    Ok(match kind {
        ModelKind::MaNtae => ParamCounts {
            total: bias_free_param_count(plan)
                + plan
                    .stages()
                    .iter()
                    .map(|s| (2 * s.hidden + s.latent + s.input) as u64)
                    .sum::<u64>(),
            biases: plan
                .stages()
                .iter()
                .map(|s| (2 * s.hidden + s.latent + s.input) as u64)
                .sum(),
        },
        ModelKind::Tfnn => ParamCounts {
            total: bias_free_param_count(plan),
            biases: 0,
        },
        ModelKind::Dae => {
            let w = dae_widths(sample_shape, plan);
            let weights: u64 = w.windows(2).map(|p| (p[0] * p[1]) as u64).sum();
            let biases: u64 = w[1..].iter().map(|&x| x as u64).sum();
            ParamCounts {
                total: weights + biases,
                biases,
            }
        }
    })
}

/// Multiply-accumulate count of one forward pass over a batch shaped `input_shape`.
///
/// For the mode-wise models each encoder stage costs
/// `H_s * D_{-s} * (I_s + K_s)`, where `D_{-s}` is the number of columns of
/// the unfolding it acts on; the decoder mirrors it. Unfold/fold copies are
/// not counted. The flattening model costs `B * sum(in * out)` over its layers.
pub fn flop_count(kind: ModelKind, input_shape: &[usize], plan: &ModePlan) -> Result<u64> {
    let shapes = stage_shapes(input_shape, plan)?;
    Ok(match kind {
        ModelKind::MaNtae | ModelKind::Tfnn => {
            let enc: u64 = plan
                .stages()
                .iter()
                .zip(&shapes)
                .map(|(s, shape)| {
                    let cols: u64 = shape.iter().map(|&d| d as u64).product::<u64>() / s.input as u64;
                    s.hidden as u64 * cols * (s.input + s.latent) as u64
                })
                .sum();
            2 * enc
        }
        ModelKind::Dae => {
            let w = dae_widths(&input_shape[1..], plan);
            input_shape[0] as u64 * w.windows(2).map(|p| (p[0] * p[1]) as u64).sum::<u64>()
        }
    })
}
