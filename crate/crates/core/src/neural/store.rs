use std::collections::BTreeMap;

use rand::Rng;

use super::checkpoint::Checkpoint;
use super::tape::Grads;
use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Matrix,
    grad: Matrix,
    m: Matrix,
    v: Matrix,
}

/// Named parameter tensors with gradient and Adam moment buffers.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: BTreeMap<String, ParamId>,
    step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: &str, value: Matrix) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let (r, c) = value.shape();
        let id = ParamId(self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            value,
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
        });
        self.index.insert(name.to_string(), id);
        id
    }

    /// Uniform init in `[-scale, scale]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> ParamId {
        let value = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..=scale));
        self.add(name, value)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.add(name, Matrix::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.entries[id.0].grad
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// Adds `scale * dL/dparam` from a backward pass into the gradient buffers.
    pub fn accumulate(&mut self, grads: &Grads, scale: f64) {
        for (i, e) in self.entries.iter_mut().enumerate() {
            if let Some(g) = grads.param(ParamId(i)) {
                e.grad += g * scale;
            }
        }
    }

    pub fn add_to_grad(&mut self, id: ParamId, g: &Matrix, scale: f64) {
        self.entries[id.0].grad += g * scale;
    }

    /// One Adam step on the accumulated gradients, which are then cleared.
    /// A non-finite gradient rejects the whole batch: nothing moves and an
    /// error names the offending tensor.
    pub fn adam_update(&mut self, cfg: &AdamConfig) -> Result<()> {
        if let Some(bad) = self.entries.iter().find(|e| e.grad.iter().any(|g| !g.is_finite())) {
            let name = bad.name.clone();
            self.zero_grad();
            return Err(Error::Numerical(format!("non-finite gradient in `{name}`")));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for e in &mut self.entries {
            for k in 0..e.value.len() {
                let g = e.grad[k];
                e.m[k] = cfg.beta1 * e.m[k] + (1.0 - cfg.beta1) * g;
                e.v[k] = cfg.beta2 * e.v[k] + (1.0 - cfg.beta2) * g * g;
                let m_hat = e.m[k] / bc1;
                let v_hat = e.v[k] / bc2;
                e.value[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
            e.grad.fill(0.0);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, checkpoint: &mut Checkpoint) {
        for e in &self.entries {
            checkpoint.push_tensor(&e.name, e.value.clone());
        }
    }

    /// Overwrites every registered tensor from a checkpoint; names and shapes
    /// must match.
    pub fn load_from(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        for e in &mut self.entries {
            let t = checkpoint
                .tensor(&e.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{}`", e.name)))?;
            if t.shape() != e.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    e.name,
                    t.shape(),
                    e.value.shape()
                )));
            }
            e.value.copy_from(t);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.iter().all(|v| v.is_finite()))
    }
}
