//! Flat parameter vectors with named blocks, and the Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Learnable scalars stored contiguously and addressed by block.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    values: Vec<f64>,
    blocks: Vec<Block>,
}

impl Params {
    pub fn new() -> Self {
        Params { values: Vec::new(), blocks: Vec::new() }
    }

    /// Append a block and return its index.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) -> usize {
        self.blocks.push(Block { name: name.into(), start: self.values.len(), len: values.len() });
        self.values.extend(values);
        self.blocks.len() - 1
    }

    /// Same layout, all zeros.
    pub fn zeros_like(&self) -> Self {
        Params { values: vec![0.0; self.values.len()], blocks: self.blocks.clone() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn block(&self, index: usize) -> &[f64] {
        let b = &self.blocks[index];
        &self.values[b.start..b.start + b.len]
    }

    pub fn block_mut(&mut self, index: usize) -> &mut [f64] {
        let b = &self.blocks[index];
        &mut self.values[b.start..b.start + b.len]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&[f64]> {
        self.find(name).map(|i| self.block(i))
    }

    /// Name of the block holding flat index `i`.
    pub fn block_name_of(&self, i: usize) -> &str {
        self.blocks
            .iter()
            .find(|b| (b.start..b.start + b.len).contains(&i))
            .map_or("?", |b| b.name.as_str())
    }

    pub fn same_layout(&self, other: &Params) -> bool {
        self.blocks == other.blocks
    }

    /// Add `other` element-wise; layouts must match.
    pub fn add_assign(&mut self, other: &Params) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.values {
            *a *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

impl Adam {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Adam { learning_rate, ..Adam::default() }
    }

    /// One bias-corrected Adam update. Nothing is modified if any gradient
    /// entry is non-finite.
    pub fn step(&self, params: &mut Params, grads: &Params, state: &mut AdamState) -> Result<()> {
        if !params.same_layout(grads) || state.m.len() != params.len() || state.v.len() != params.len() {
            return Err(Error::Dimension("parameter, gradient and optimizer state shapes differ".into()));
        }
        if let Some(i) = grads.values.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of block '{}'", grads.block_name_of(i))));
        }
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params.values.iter_mut().zip(&grads.values).zip(&mut state.m).zip(&mut state.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
