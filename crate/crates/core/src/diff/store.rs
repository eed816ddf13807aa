//! Named parameter storage with Adam updates.

use alloc::string::String;
use alloc::vec::Vec;

use super::DiffError;
use crate::math;
use crate::matrix::Matrix;

#[derive(Debug)]
struct Entry {
    name: String,
    value: Matrix,
    grad: Matrix,
    m: Matrix,
    v: Matrix,
}

/// Parameters sorted by name, each with an accumulated gradient buffer and
/// Adam moment estimates. Iteration order is always lexicographic, so every
/// consumer (updates, checkpoints, gradient checks) sees the same order.
#[derive(Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    step: u64,
    dirty: bool,
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| Entry {
                name: e.name.clone(),
                value: e.value.clone(),
                grad: e.grad.clone(),
                m: e.m.clone(),
                v: e.v.clone(),
            })
            .collect();
        ParamStore { entries, step: self.step, dirty: self.dirty }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.binary_search_by(|e| e.name.as_str().cmp(name)).ok()
    }

    /// Register a parameter; names must be unique.
    pub fn insert(&mut self, name: &str, value: Matrix) -> Result<(), DiffError> {
        match self.entries.binary_search_by(|e| e.name.as_str().cmp(name)) {
            Ok(_) => Err(DiffError::DuplicateParam(String::from(name))),
            Err(pos) => {
                let (rows, cols) = value.shape();
                self.entries.insert(
                    pos,
                    Entry {
                        name: String::from(name),
                        value,
                        grad: Matrix::zeros(rows, cols),
                        m: Matrix::zeros(rows, cols),
                        v: Matrix::zeros(rows, cols),
                    },
                );
                Ok(())
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.index_of(name).map(|i| &self.entries[i].value)
    }

    /// Mutable access for in-place edits; the shape must stay fixed.
    pub fn value_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.index_of(name).map(move |i| &mut self.entries[i].value)
    }

    /// Replace a parameter's value; the shape must match.
    pub fn set_value(&mut self, name: &str, value: Matrix) -> Result<(), DiffError> {
        let i = self.index_of(name).ok_or_else(|| DiffError::UnknownParam(String::from(name)))?;
        if self.entries[i].value.shape() != value.shape() {
            return Err(DiffError::GradShape(String::from(name)));
        }
        self.entries[i].value = value;
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Option<&Matrix> {
        self.index_of(name).map(|i| &self.entries[i].grad)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// `(name, value)` pairs in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
        self.dirty = false;
    }

    /// Add `grad` into the named parameter's gradient buffer.
    pub fn accumulate_grad(&mut self, name: &str, grad: &Matrix) -> Result<(), DiffError> {
        let i = self.index_of(name).ok_or_else(|| DiffError::UnknownParam(String::from(name)))?;
        if self.entries[i].value.shape() != grad.shape() {
            return Err(DiffError::GradShape(String::from(name)));
        }
        self.entries[i].grad.add_assign_scaled(grad, 1.0);
        self.dirty = true;
        Ok(())
    }

    /// One Adam update over all parameters from the accumulated gradients,
    /// which are cleared afterwards. Parameters whose gradient buffer is all
    /// zeros (and whose moments never left zero) are bit-identical afterwards.
    pub fn adam_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<(), DiffError> {
        if !self.dirty {
            return Err(DiffError::MissingGradients);
        }
        self.step += 1;
        let bc1 = 1.0 - math::pow(beta1, self.step as f64);
        let bc2 = 1.0 - math::pow(beta2, self.step as f64);
        for e in &mut self.entries {
            for k in 0..e.value.len() {
                let g = e.grad.data()[k];
                let m = beta1 * e.m.data()[k] + (1.0 - beta1) * g;
                let v = beta2 * e.v.data()[k] + (1.0 - beta2) * g * g;
                e.m.data_mut()[k] = m;
                e.v.data_mut()[k] = v;
                let update = lr * (m / bc1) / (math::sqrt(v / bc2) + eps);
                e.value.data_mut()[k] -= update;
            }
            e.grad.fill(0.0);
        }
        self.dirty = false;
        Ok(())
    }

    /// Number of completed Adam steps.
    pub fn steps(&self) -> u64 {
        self.step
    }
}
