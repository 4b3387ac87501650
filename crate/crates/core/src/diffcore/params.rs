use std::collections::HashMap;

use ndarray::{Array2, Zip};
use rand::Rng;

use super::graph::{Gradients, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// One named trainable matrix with its gradient slot and RMSProp accumulator.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub sq_avg: Matrix,
}

/// Named trainable parameters in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    entries: Vec<Parameter>,
    index: HashMap<String, ParamId>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(name, "duplicate parameter name"));
        }
        let id = ParamId(self.entries.len());
        let shape = value.dim();
        self.entries.push(Parameter {
            name: name.clone(),
            value,
            grad: Array2::zeros(shape),
            sq_avg: Array2::zeros(shape),
        });
        self.index.insert(name, id);
        Ok(id)
    }

    /// Inserts a (rows, cols) matrix drawn uniformly from ±1/√fan_in.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let value = Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound));
        self.insert(name, value)
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

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.entries[id.0]
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

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.entries.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    /// Adds the parameter gradients of one backward pass into the grad slots.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.params() {
            self.entries[id.0].grad += g;
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            p.grad.fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|p| p.grad.iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for p in &mut self.entries {
                p.grad *= k;
            }
        }
        norm
    }

    pub fn same_layout(&self, other: &ParameterStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.value.dim() == b.value.dim())
    }

    /// Overwrites every value with the one from `other`. Gradients and
    /// optimizer state are left alone.
    pub fn copy_values_from(&mut self, other: &ParameterStore) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::config(
                "parameters",
                "stores differ in names or shapes",
            ));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            dst.value.assign(&src.value);
        }
        Ok(())
    }

    /// Bitwise comparison of values.
    pub fn values_equal(&self, other: &ParameterStore) -> bool {
        self.same_layout(other)
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                Zip::from(&a.value)
                    .and(&b.value)
                    .fold(true, |ok, x, y| ok && x.to_bits() == y.to_bits())
            })
    }
}
