//! Reverse-mode differentiation over whole tensors.
//!
//! A [`Tape`] records a straight-line program built from a fixed op set:
//! column-wise affine maps ([`Tape::fc`]), ReLU, elementwise addition,
//! index-bijection reshapes (unfold, fold, permute, flat reshape) and the
//! batch reconstruction loss. Trainable tensors live in a [`ParamStore`];
//! the tape borrows it immutably during the forward pass and
//! [`Tape::backward`] returns a [`ParamGrads`] that the caller accumulates
//! back into the store.
//!
//! ```
//! use ntae::autodiff::{ParamStore, Tape};
//! use ntae::DenseTensor;
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", DenseTensor::from_data(vec![1, 1], vec![2.0])?);
//! let b = store.add("b", DenseTensor::from_data(vec![1], vec![3.0])?);
//! let mut tape = Tape::new(&store);
//! let z = tape.constant(DenseTensor::from_data(vec![1, 1], vec![5.0])?);
//! let (wv, bv) = (tape.param(w), tape.param(b));
//! let out = tape.fc(wv, Some(bv), z)?;
//! assert_eq!(tape.value(out).data(), &[13.0]);
//! # Ok::<(), ntae::Error>(())
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::linalg::{gemm, MatView};
use crate::rng::SeededRng;
use crate::tensor::{check_permutation, inverse_permutation, DenseTensor};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: DenseTensor,
    pub grad: DenseTensor,
}

/// Owned, named trainable tensors with gradient accumulators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseTensor) -> ParamId {
        let grad = DenseTensor::from_parts_unchecked(value.shape().to_vec(), vec![0.0; value.len()]);
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseTensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseTensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &DenseTensor {
        &self.params[id.0].grad
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Replaces the accumulators with the gradients of one backward pass
    /// (same result as `zero_grad` followed by `accumulate`, without the copies).
    pub fn set_grads(&mut self, grads: ParamGrads) -> Result<()> {
        if grads.grads.len() != self.params.len() {
            return Err(Error::Usage(format!(
                "gradients for {} parameters applied to a store of {}",
                grads.grads.len(),
                self.params.len()
            )));
        }
        for (p, g) in self.params.iter_mut().zip(grads.grads) {
            match g {
                Some(g) => p.grad = g,
                None => p.grad.data_mut().fill(0.0),
            }
        }
        Ok(())
    }

    /// Value (mutable) and gradient of one parameter.
    pub(crate) fn value_and_grad(&mut self, id: ParamId) -> (&mut DenseTensor, &DenseTensor) {
        let p = &mut self.params[id.0];
        (&mut p.value, &p.grad)
    }

    /// Adds the gradients from one backward pass into the accumulators.
    pub fn accumulate(&mut self, grads: &ParamGrads) -> Result<()> {
        if grads.grads.len() != self.params.len() {
            return Err(Error::Usage(format!(
                "gradients for {} parameters applied to a store of {}",
                grads.grads.len(),
                self.params.len()
            )));
        }
        for (p, g) in self.params.iter_mut().zip(&grads.grads) {
            if let Some(g) = g {
                for (acc, x) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *acc += x;
                }
            }
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass, indexed like the store.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    grads: Vec<Option<DenseTensor>>,
}

impl ParamGrads {
    /// Gradient for `id`, or `None` when the loss does not depend on it.
    pub fn get(&self, id: ParamId) -> Option<&DenseTensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Index bijections the tape can differentiate through.
#[derive(Debug, Clone, PartialEq)]
pub enum Reshape {
    /// Mode-`n` unfolding.
    Unfold(usize),
    /// Fold a matrix back into `shape` along mode `n`.
    Fold { mode: usize, shape: Vec<usize> },
    /// Axis permutation (output mode `k` is input mode `perm[k]`).
    Permute(Vec<usize>),
    /// Same row-major data, new extents.
    Flat(Vec<usize>),
    /// Arbitrary bijection: `out[k] = in[index[k]]`, with output extents `shape`.
    Gather { index: Vec<usize>, shape: Vec<usize> },
}

impl Reshape {
    fn apply(&self, x: &DenseTensor) -> Result<DenseTensor> {
        match self {
            Reshape::Unfold(n) => x.unfold(*n),
            Reshape::Fold { mode, shape } => DenseTensor::fold(x, *mode, shape),
            Reshape::Permute(p) => x.permute(p),
            Reshape::Flat(shape) => x.reshape(shape),
            Reshape::Gather { index, shape } => {
                if index.len() != x.len() || shape.iter().product::<usize>() != x.len() {
                    return Err(Error::Size("gather map does not match input size".into()));
                }
                let data = index.iter().map(|&i| x.data()[i]).collect();
                DenseTensor::from_data(shape.clone(), data)
            }
        }
    }

    /// The inverse map, given the input shape of the forward map.
    fn inverse(&self, input_shape: &[usize]) -> Reshape {
        match self {
            Reshape::Unfold(n) => Reshape::Fold {
                mode: *n,
                shape: input_shape.to_vec(),
            },
            Reshape::Fold { mode, .. } => Reshape::Unfold(*mode),
            Reshape::Permute(p) => Reshape::Permute(inverse_permutation(p)),
            Reshape::Flat(_) => Reshape::Flat(input_shape.to_vec()),
            Reshape::Gather { index, .. } => Reshape::Gather {
                index: inverse_permutation(index),
                shape: input_shape.to_vec(),
            },
        }
    }

    fn validate(&self, x: &DenseTensor) -> Result<()> {
        match self {
            Reshape::Permute(p) => check_permutation(p, x.order()),
            Reshape::Gather { index, .. } => {
                let mut seen = vec![false; index.len()];
                for &i in index {
                    if i >= seen.len() || seen[i] {
                        return Err(Error::Mode("gather index is not a bijection".into()));
                    }
                    seen[i] = true;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Fc { w: usize, b: Option<usize>, z: usize },
    Relu(usize),
    Add(usize, usize),
    Reshape { x: usize, map: Reshape },
    Mse { xhat: usize, x: usize },
}

#[derive(Debug)]
struct Node {
    value: Option<DenseTensor>,
    op: Op,
    requires_grad: bool,
}

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Recording of one forward pass over a borrowed [`ParamStore`].
#[derive(Debug)]
pub struct Tape<'a> {
    id: u64,
    store: &'a ParamStore,
    nodes: Vec<Node>,
    record: bool,
}

impl<'a> Tape<'a> {
    /// A tape that records ops for a later [`backward`](Self::backward).
    pub fn new(store: &'a ParamStore) -> Self {
        Self::with_recording(store, true)
    }

    /// Forward-only evaluation; values are identical to a recording tape.
    pub fn no_grad(store: &'a ParamStore) -> Self {
        Self::with_recording(store, false)
    }

    fn with_recording(store: &'a ParamStore, record: bool) -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            store,
            nodes: Vec::new(),
            record,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Usage("variable does not belong to this tape".into()));
        }
        Ok(v.index)
    }

    fn val(&self, i: usize) -> &DenseTensor {
        match (&self.nodes[i].value, &self.nodes[i].op) {
            (Some(v), _) => v,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    /// Current value of a variable.
    pub fn value(&self, v: Var) -> &DenseTensor {
        let i = self.idx(v).expect("variable from another tape");
        self.val(i)
    }

    fn push(&mut self, value: Option<DenseTensor>, op: Op, requires_grad: bool) -> Var {
        let requires_grad = requires_grad && self.record;
        let op = if self.record || matches!(op, Op::Param(_)) {
            op
        } else {
            Op::Leaf
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: DenseTensor) -> Var {
        self.push(Some(value), Op::Leaf, false)
    }

    /// A differentiable reference to a stored parameter (no copy).
    pub fn param(&mut self, id: ParamId) -> Var {
        assert!(id.0 < self.store.len(), "parameter id out of range");
        self.push(None, Op::Param(id), true)
    }

    /// Column-wise affine map `W Z + b 1^T` for `W: H x I`, `b: H`, `Z: I x J`.
    pub fn fc(&mut self, w: Var, b: Option<Var>, z: Var) -> Result<Var> {
        let (wi, zi) = (self.idx(w)?, self.idx(z)?);
        let bi = b.map(|b| self.idx(b)).transpose()?;
        let (wv, zv) = (self.val(wi), self.val(zi));
        if wv.order() != 2 || zv.order() != 2 || wv.shape()[1] != zv.shape()[0] {
            return Err(Error::Size(format!(
                "fc weight {:?} does not conform with input {:?}",
                wv.shape(),
                zv.shape()
            )));
        }
        let (h, i, j) = (wv.shape()[0], wv.shape()[1], zv.shape()[1]);
        let mut out = vec![0.0; h * j];
        gemm(
            1.0,
            wv.data(),
            MatView::new(h, i),
            zv.data(),
            MatView::new(i, j),
            0.0,
            &mut out,
        );
        if let Some(bi) = bi {
            let bv = self.val(bi);
            if bv.len() != h || bv.order() != 1 {
                return Err(Error::Size(format!(
                    "fc bias {:?} does not match {h} outputs",
                    bv.shape()
                )));
            }
            for (row, &bias) in out.chunks_mut(j).zip(bv.data()) {
                row.iter_mut().for_each(|x| *x += bias);
            }
        }
        let rg = self.rg(wi) || self.rg(zi) || bi.is_some_and(|b| self.rg(b));
        let value = DenseTensor::from_parts_unchecked(vec![h, j], out);
        Ok(self.push(Some(value), Op::Fc { w: wi, b: bi, z: zi }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let value = self.val(xi).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(xi);
        Ok(self.push(Some(value), Op::Relu(xi), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let value = self.val(ai).add(self.val(bi))?;
        let rg = self.rg(ai) || self.rg(bi);
        Ok(self.push(Some(value), Op::Add(ai, bi), rg))
    }

    /// Applies an index bijection.
    pub fn reshape(&mut self, x: Var, map: Reshape) -> Result<Var> {
        let xi = self.idx(x)?;
        map.validate(self.val(xi))?;
        let value = map.apply(self.val(xi))?;
        let rg = self.rg(xi);
        Ok(self.push(Some(value), Op::Reshape { x: xi, map }, rg))
    }

    pub fn unfold(&mut self, x: Var, mode: usize) -> Result<Var> {
        self.reshape(x, Reshape::Unfold(mode))
    }

    pub fn fold(&mut self, x: Var, mode: usize, shape: &[usize]) -> Result<Var> {
        self.reshape(
            x,
            Reshape::Fold {
                mode,
                shape: shape.to_vec(),
            },
        )
    }

    /// Batch reconstruction loss `(1/B) sum_b ||xhat_b - x_b||_F^2` with mode 0 as the batch mode.
    pub fn mse_loss(&mut self, xhat: Var, x: Var) -> Result<Var> {
        let (hi, xi) = (self.idx(xhat)?, self.idx(x)?);
        let (hv, xv) = (self.val(hi), self.val(xi));
        if hv.shape() != xv.shape() {
            return Err(Error::Size(format!(
                "loss inputs differ in shape: {:?} vs {:?}",
                hv.shape(),
                xv.shape()
            )));
        }
        let batch = hv.shape()[0] as f64;
        let sum: f64 = hv.data().iter().zip(xv.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let value = DenseTensor::from_parts_unchecked(vec![1], vec![sum / batch]);
        let rg = self.rg(hi) || self.rg(xi);
        Ok(self.push(Some(value), Op::Mse { xhat: hi, x: xi }, rg))
    }

    /// Hash of the sign pattern at every recorded ReLU input.
    ///
    /// Two evaluations with equal signatures lie on the same linear piece,
    /// which is what finite-difference checks need.
    pub fn relu_signature(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                for &v in self.val(x).data() {
                    h = (h ^ u64::from(v > 0.0)).wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(self, loss: Var) -> Result<ParamGrads> {
        if !self.record {
            return Err(Error::Usage("backward on a tape created with no_grad".into()));
        }
        let li = self.idx(loss)?;
        if self.val(li).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.val(li).shape()
            )));
        }
        let mut param_grads: Vec<Option<DenseTensor>> = vec![None; self.store.len()];
        let mut grads: Vec<Option<DenseTensor>> = Vec::with_capacity(li + 1);
        grads.resize_with(li + 1, || None);
        grads[li] = Some(DenseTensor::from_parts_unchecked(
            self.val(li).shape().to_vec(),
            vec![1.0],
        ));

        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(id) => accumulate(&mut param_grads[id.0], g),
                Op::Fc { w, b, z } => {
                    let (wv, zv) = (self.val(*w), self.val(*z));
                    let (h, inner, j) = (wv.shape()[0], wv.shape()[1], zv.shape()[1]);
                    if self.rg(*w) {
                        let mut dw = vec![0.0; h * inner];
                        gemm(
                            1.0,
                            g.data(),
                            MatView::new(h, j),
                            zv.data(),
                            MatView::new(inner, j).t(),
                            0.0,
                            &mut dw,
                        );
                        accumulate(&mut grads[*w], DenseTensor::from_parts_unchecked(vec![h, inner], dw));
                    }
                    if let Some(b) = b.filter(|&b| self.rg(b)) {
                        let db = g.data().chunks(j).map(|row| row.iter().sum()).collect();
                        accumulate(&mut grads[b], DenseTensor::from_parts_unchecked(vec![h], db));
                    }
                    if self.rg(*z) {
                        let mut dz = vec![0.0; inner * j];
                        gemm(
                            1.0,
                            wv.data(),
                            MatView::new(h, inner).t(),
                            g.data(),
                            MatView::new(h, j),
                            0.0,
                            &mut dz,
                        );
                        accumulate(&mut grads[*z], DenseTensor::from_parts_unchecked(vec![inner, j], dz));
                    }
                }
                Op::Relu(x) => {
                    let xv = self.val(*x);
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads[*x], dx);
                }
                Op::Add(a, b) => {
                    if self.rg(*a) && self.rg(*b) {
                        accumulate(&mut grads[*a], g.clone());
                    } else if self.rg(*a) {
                        accumulate(&mut grads[*a], g);
                        continue;
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads[*b], g);
                    }
                }
                Op::Reshape { x, map } => {
                    let back = map.inverse(self.val(*x).shape()).apply(&g)?;
                    accumulate(&mut grads[*x], back);
                }
                Op::Mse { xhat, x } => {
                    let (hv, xv) = (self.val(*xhat), self.val(*x));
                    let scale = 2.0 * g.data()[0] / hv.shape()[0] as f64;
                    let d: Vec<f64> = hv.data().iter().zip(xv.data()).map(|(a, b)| scale * (a - b)).collect();
                    let d = DenseTensor::from_parts_unchecked(hv.shape().to_vec(), d);
                    if self.rg(*x) {
                        accumulate(&mut grads[*x], d.scale(-1.0));
                    }
                    if self.rg(*xhat) {
                        accumulate(&mut grads[*xhat], d);
                    }
                }
            }
        }
        Ok(ParamGrads { grads: param_grads })
    }
}

fn accumulate(slot: &mut Option<DenseTensor>, g: DenseTensor) {
    match slot {
        Some(acc) => {
            for (a, x) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += x;
            }
        }
        None => *slot = Some(g),
    }
}

/// Outcome of comparing tape gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Max `|a - n| / max(|a|, |n|)` over coordinates with `|a| >= 1e-8`.
    pub max_rel_error: f64,
    /// Max `|a - n|` over coordinates with `|a| < 1e-8`.
    pub max_abs_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed a ReLU kink.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= rel_tol && self.max_abs_error <= 1e-8
    }
}

/// Compares backward gradients of `loss_fn` against central differences.
///
/// `max_coords` caps the number of coordinates (sampled uniformly without
/// replacement with `seed`); `None` checks every coordinate. Stored
/// gradients are left untouched.
pub fn grad_check<F>(
    store: &mut ParamStore,
    loss_fn: F,
    eps: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |store: &ParamStore| -> Result<(f64, u64)> {
        let mut tape = Tape::no_grad(store);
        let loss = loss_fn(&mut tape)?;
        Ok((tape.value(loss).data()[0], tape.relu_signature()))
    };
    let (_, base_sig) = eval(store)?;

    let mut coords: Vec<(ParamId, usize)> = store
        .iter()
        .flat_map(|(id, p)| (0..p.value.len()).map(move |k| (id, k)))
        .collect();
    if let Some(cap) = max_coords {
        if coords.len() > cap {
            let mut rng = SeededRng::new(seed);
            rng.shuffle(&mut coords);
            coords.truncate(cap);
        }
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (id, k) in coords {
        let orig = store.value(id).data()[k];
        store.value_mut(id).data_mut()[k] = orig + eps;
        let (plus, sig_p) = eval(store)?;
        store.value_mut(id).data_mut()[k] = orig - eps;
        let (minus, sig_m) = eval(store)?;
        store.value_mut(id).data_mut()[k] = orig;
        if sig_p != base_sig || sig_m != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.get(id).map_or(0.0, |g| g.data()[k]);
        if a.abs() < 1e-8 {
            report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
        } else {
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            report.max_rel_error = report.max_rel_error.max(rel);
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> DenseTensor {
        DenseTensor::from_data(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn fc_identity_passes_input_through() {
        let mut store = ParamStore::new();
        let w = store.add("w", DenseTensor::identity(3).unwrap());
        let b = store.add("b", DenseTensor::zeros(&[3]).unwrap());
        let z = DenseTensor::random_normal(&[3, 4], 1).unwrap();
        let mut tape = Tape::new(&store);
        let zv = tape.constant(z.clone());
        let (wv, bv) = (tape.param(w), tape.param(b));
        let out = tape.fc(wv, Some(bv), zv).unwrap();
        assert_eq!(tape.value(out), &z);
    }

    #[test]
    fn fc_scalar_hand_derivatives() {
        let mut store = ParamStore::new();
        let w = store.add("w", t(&[1, 1], &[2.0]));
        let b = store.add("b", t(&[1], &[3.0]));
        let z = store.add("z", t(&[1, 1], &[5.0]));
        let mut tape = Tape::new(&store);
        let (wv, bv, zv) = (tape.param(w), tape.param(b), tape.param(z));
        let out = tape.fc(wv, Some(bv), zv).unwrap();
        assert_eq!(tape.value(out).data(), &[13.0]);
        // out is 1x1, so it is already a valid scalar "loss"
        let flat = tape.reshape(out, Reshape::Flat(vec![1])).unwrap();
        let grads = tape.backward(flat).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[5.0]);
        assert_eq!(grads.get(z).unwrap().data(), &[2.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0]);
    }

    #[test]
    fn fc_shape_mismatch() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let w = tape.constant(DenseTensor::zeros(&[2, 3]).unwrap());
        let z = tape.constant(DenseTensor::zeros(&[4, 1]).unwrap());
        assert!(matches!(tape.fc(w, None, z), Err(Error::Size(_))));
    }

    #[test]
    fn relu_all_negative() {
        let mut store = ParamStore::new();
        let x = store.add("x", t(&[1, 3], &[-1.0, -2.0, -0.5]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let r = tape.relu(xv).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 0.0]);
        let zero = tape.constant(DenseTensor::zeros(&[1, 3]).unwrap());
        let loss = tape.mse_loss(r, zero).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_positive_passes_gradient() {
        let mut store = ParamStore::new();
        let x = store.add("x", t(&[1, 1], &[3.0]));
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let r = tape.relu(xv).unwrap();
        assert_eq!(tape.value(r).data(), &[3.0]);
        let flat = tape.reshape(r, Reshape::Flat(vec![1])).unwrap();
        assert_eq!(tape.backward(flat).unwrap().get(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn add_zero_and_shape_mismatch() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = DenseTensor::random_normal(&[2, 3], 4).unwrap();
        let a = tape.constant(x.clone());
        let z = tape.constant(DenseTensor::zeros(&[2, 3]).unwrap());
        let s = tape.add(a, z).unwrap();
        assert_eq!(tape.value(s), &x);
        let other = tape.constant(DenseTensor::zeros(&[3, 2]).unwrap());
        assert!(matches!(tape.add(a, other), Err(Error::Size(_))));
    }

    #[test]
    fn mse_values() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = DenseTensor::random_normal(&[2, 2, 2], 9).unwrap();
        let a = tape.constant(x.clone());
        let b = tape.constant(x);
        let l = tape.mse_loss(a, b).unwrap();
        assert_eq!(tape.value(l).data(), &[0.0]);

        let ones = tape.constant(DenseTensor::filled(&[1, 2, 2, 2], 1.0).unwrap());
        let zeros = tape.constant(DenseTensor::zeros(&[1, 2, 2, 2]).unwrap());
        let l = tape.mse_loss(ones, zeros).unwrap();
        assert_eq!(tape.value(l).data(), &[8.0]);
        assert!(matches!(tape.mse_loss(a, ones), Err(Error::Size(_))));
    }

    #[test]
    fn mse_gradient_is_two_over_batch_times_residual() {
        let mut store = ParamStore::new();
        let xhat = DenseTensor::random_normal(&[4, 3], 1).unwrap();
        let x = DenseTensor::random_normal(&[4, 3], 2).unwrap();
        let id = store.add("xhat", xhat.clone());
        let mut tape = Tape::new(&store);
        let hv = tape.param(id);
        let xv = tape.constant(x.clone());
        let loss = tape.mse_loss(hv, xv).unwrap();
        let g = tape.backward(loss).unwrap();
        let want = xhat.sub(&x).unwrap().scale(2.0 / 4.0);
        for (a, b) in g.get(id).unwrap().data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reshape_then_inverse_is_identity() {
        let mut store = ParamStore::new();
        let x = DenseTensor::random_normal(&[2, 3, 4], 3).unwrap();
        let id = store.add("x", x.clone());
        let mut tape = Tape::new(&store);
        let xv = tape.param(id);
        let p = tape.reshape(xv, Reshape::Permute(vec![2, 0, 1])).unwrap();
        let back = tape.reshape(p, Reshape::Permute(vec![1, 2, 0])).unwrap();
        assert_eq!(tape.value(back), &x);
        let zero = tape.constant(DenseTensor::zeros(&[2, 3, 4]).unwrap());
        let loss = tape.mse_loss(back, zero).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(id).unwrap(), &x.scale(2.0 / 2.0));
    }

    #[test]
    fn gather_rejects_non_bijection() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(DenseTensor::zeros(&[3]).unwrap());
        let bad = Reshape::Gather {
            index: vec![0, 0, 1],
            shape: vec![3],
        };
        assert!(tape.reshape(x, bad).is_err());
    }

    #[test]
    fn constant_loss_gives_zero_grads() {
        let mut store = ParamStore::new();
        let w = store.add("w", DenseTensor::random_normal(&[2, 2], 1).unwrap());
        let mut tape = Tape::new(&store);
        let _ = tape.param(w);
        let a = tape.constant(DenseTensor::filled(&[1, 2], 1.0).unwrap());
        let b = tape.constant(DenseTensor::zeros(&[1, 2]).unwrap());
        let loss = tape.mse_loss(a, b).unwrap();
        let grads = tape.backward(loss).unwrap();
        store.accumulate(&grads).unwrap();
        assert!(store.grad(w).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_twice_doubles_and_zero_grad_resets() {
        let mut store = ParamStore::new();
        let w = store.add("w", DenseTensor::random_normal(&[2, 3], 1).unwrap());
        let z = DenseTensor::random_normal(&[3, 4], 2).unwrap();
        let target = DenseTensor::random_normal(&[2, 4], 3).unwrap();
        let run = |store: &ParamStore| {
            let mut tape = Tape::new(store);
            let (wv, zv, tv) = (tape.param(w), tape.constant(z.clone()), tape.constant(target.clone()));
            let out = tape.fc(wv, None, zv).unwrap();
            let loss = tape.mse_loss(out, tv).unwrap();
            tape.backward(loss).unwrap()
        };
        let g1 = run(&store);
        store.accumulate(&g1).unwrap();
        let once = store.grad(w).clone();
        let g2 = run(&store);
        store.accumulate(&g2).unwrap();
        assert_eq!(store.grad(w), &once.scale(2.0));
        store.zero_grad();
        assert!(store.grad(w).data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn set_grads_replaces_and_clears_unused() {
        let mut store = ParamStore::new();
        let w = store.add("w", DenseTensor::random_normal(&[2, 3], 1).unwrap());
        let unused = store.add("u", DenseTensor::random_normal(&[4], 2).unwrap());
        let z = DenseTensor::random_normal(&[3, 4], 3).unwrap();
        let run = |store: &ParamStore| {
            let mut tape = Tape::new(store);
            let (wv, zv) = (tape.param(w), tape.constant(z.clone()));
            let out = tape.fc(wv, None, zv).unwrap();
            let zero = tape.constant(DenseTensor::zeros(&[2, 4]).unwrap());
            let loss = tape.mse_loss(out, zero).unwrap();
            tape.backward(loss).unwrap()
        };
        let g = run(&store);
        store.accumulate(&g).unwrap();
        let once = store.grad(w).clone();
        *store.params[unused.index()].grad.data_mut().first_mut().unwrap() = 7.0;
        store.set_grads(run(&store)).unwrap();
        assert_eq!(store.grad(w), &once);
        assert!(store.grad(unused).data().iter().all(|&g| g == 0.0));

        let mut small = ParamStore::new();
        small.add("w", DenseTensor::zeros(&[1]).unwrap());
        assert!(matches!(small.set_grads(run(&store)), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_usage_errors() {
        let store = ParamStore::new();
        let mut tape = Tape::no_grad(&store);
        let x = tape.constant(DenseTensor::zeros(&[1]).unwrap());
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));

        let mut tape = Tape::new(&store);
        let x = tape.constant(DenseTensor::zeros(&[2]).unwrap());
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));

        let mut other = Tape::new(&store);
        let foreign = other.constant(DenseTensor::zeros(&[1]).unwrap());
        let tape = Tape::new(&store);
        assert!(matches!(tape.backward(foreign), Err(Error::Usage(_))));
    }

    #[test]
    fn no_grad_values_match_recording() {
        let mut store = ParamStore::new();
        let w = store.add("w", DenseTensor::random_normal(&[3, 4], 5).unwrap());
        let b = store.add("b", DenseTensor::random_normal(&[3], 6).unwrap());
        let z = DenseTensor::random_normal(&[4, 7], 7).unwrap();
        let eval = |mut tape: Tape<'_>| {
            let (wv, bv, zv) = (tape.param(w), tape.param(b), tape.constant(z.clone()));
            let h = tape.fc(wv, Some(bv), zv).unwrap();
            let r = tape.relu(h).unwrap();
            tape.value(r).clone()
        };
        let a = eval(Tape::new(&store));
        let c = eval(Tape::no_grad(&store));
        assert_eq!(
            a.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            c.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
