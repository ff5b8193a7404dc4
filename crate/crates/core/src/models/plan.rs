use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widths for one encoded mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSpec {
    /// Mode index in the batch tensor (mode 0 is the batch mode, so `mode >= 1`).
    pub mode: usize,
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
}

/// Ordered modes to compress and their input/hidden/latent widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePlan {
    stages: Vec<ModeSpec>,
    /// Reduction factor the widths were derived from, when they were.
    alpha: Option<f64>,
}

fn round_width(x: f64) -> usize {
    (x.round() as usize).max(1)
}

impl ModePlan {
    /// Explicit plan; validated against `sample_shape`.
    pub fn new(sample_shape: &[usize], stages: Vec<ModeSpec>) -> Result<Self> {
        let plan = Self { stages, alpha: None };
        plan.validate(sample_shape)?;
        Ok(plan)
    }

    /// Plan over `modes` (in order) with `H = round(alpha I)`, `K = round(alpha^2 I)`, both at least 1.
    pub fn with_alpha(sample_shape: &[usize], modes: &[usize], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Plan(format!("reduction factor must lie in (0, 1), got {alpha}")));
        }
        let stages = modes
            .iter()
            .map(|&mode| {
                let input = *sample_shape.get(mode.wrapping_sub(1)).ok_or_else(|| {
                    Error::Plan(format!(
                        "mode {mode} is not a sample mode of {sample_shape:?} (modes start at 1)"
                    ))
                })?;
                Ok(ModeSpec {
                    mode,
                    input,
                    hidden: round_width(alpha * input as f64),
                    latent: round_width(alpha * alpha * input as f64),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let plan = Self {
            stages,
            alpha: Some(alpha),
        };
        plan.validate(sample_shape)?;
        Ok(plan)
    }

    /// Every sample mode, in order.
    pub fn all_modes(sample_shape: &[usize], alpha: f64) -> Result<Self> {
        let modes: Vec<usize> = (1..=sample_shape.len()).collect();
        Self::with_alpha(sample_shape, &modes, alpha)
    }

    pub fn empty() -> Self {
        Self {
            stages: Vec::new(),
            alpha: None,
        }
    }

    /// Grows latent widths until the latent core holds at least `min_total`
    /// features per sample. The smallest growable width is incremented
    /// first (ties go to the earlier stage).
    pub fn with_min_latent(mut self, sample_shape: &[usize], min_total: usize) -> Result<Self> {
        self.validate(sample_shape)?;
        loop {
            let total: usize = self.latent_sample_shape(sample_shape).iter().product();
            if total >= min_total {
                return Ok(self);
            }
            let grow = self
                .stages
                .iter()
                .enumerate()
                .filter(|(_, s)| s.latent + 1 < s.input)
                .min_by_key(|(i, s)| (s.latent, *i))
                .map(|(i, _)| i)
                .ok_or_else(|| {
                    Error::Plan(format!(
                        "cannot reach {min_total} latent features with sample shape {sample_shape:?}"
                    ))
                })?;
            self.stages[grow].latent += 1;
        }
    }

    pub fn stages(&self) -> &[ModeSpec] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// Checks the plan against the extents of one sample.
    pub fn validate(&self, sample_shape: &[usize]) -> Result<()> {
        let mut seen = vec![false; sample_shape.len() + 1];
        for s in &self.stages {
            if s.mode == 0 {
                return Err(Error::Plan("mode 0 is the batch mode and cannot be encoded".into()));
            }
            if s.mode > sample_shape.len() {
                return Err(Error::Plan(format!(
                    "mode {} out of range for sample shape {sample_shape:?}",
                    s.mode
                )));
            }
            if seen[s.mode] {
                return Err(Error::Plan(format!("mode {} listed twice", s.mode)));
            }
            seen[s.mode] = true;
            if s.input != sample_shape[s.mode - 1] {
                return Err(Error::Plan(format!(
                    "mode {} has extent {} but the plan expects {}",
                    s.mode,
                    sample_shape[s.mode - 1],
                    s.input
                )));
            }
            if s.hidden == 0 || s.latent == 0 || s.latent >= s.input {
                return Err(Error::Plan(format!(
                    "mode {} needs 1 <= latent < input and hidden >= 1, got I={} H={} K={}",
                    s.mode, s.input, s.hidden, s.latent
                )));
            }
        }
        Ok(())
    }

    /// Extents of one sample after all stages.
    pub fn latent_sample_shape(&self, sample_shape: &[usize]) -> Vec<usize> {
        let mut shape = sample_shape.to_vec();
        for s in &self.stages {
            shape[s.mode - 1] = s.latent;
        }
        shape
    }

    /// Extents of one sample after the hidden layer of every stage (used for DAE widths).
    pub(crate) fn hidden_sample_shape(&self, sample_shape: &[usize]) -> Vec<usize> {
        let mut shape = sample_shape.to_vec();
        for s in &self.stages {
            shape[s.mode - 1] = s.hidden;
        }
        shape
    }
}

/// Shapes of the tensor before the first stage and after each stage.
///
/// `input_shape` includes the batch mode; the result has `plan.len() + 1` entries.
pub fn stage_shapes(input_shape: &[usize], plan: &ModePlan) -> Result<Vec<Vec<usize>>> {
    if input_shape.len() < 2 {
        return Err(Error::Plan(format!(
            "input {input_shape:?} needs a batch mode and at least one sample mode"
        )));
    }
    plan.validate(&input_shape[1..])?;
    let mut shapes = vec![input_shape.to_vec()];
    let mut cur = input_shape.to_vec();
    for s in plan.stages() {
        cur[s.mode] = s.latent;
        shapes.push(cur.clone());
    }
    Ok(shapes)
}
