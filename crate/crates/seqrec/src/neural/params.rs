//! Named parameter store with matching gradient accumulators.

use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::Matrix;

/// Handle into a [`ParameterSet`]. Registration order is part of the model's
/// deterministic identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn from_index(index: usize) -> ParamId {
        ParamId(index)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

/// All learnable parameters of a model, each with a same-shape gradient
/// buffer. Gradients accumulate across backward calls and are zeroed by the
/// optimizer step.
#[derive(Debug, Clone)]
pub struct ParameterSet {
    names: Vec<String>,
    values: Vec<Matrix>,
    grads: Vec<Matrix>,
}

impl ParameterSet {
    pub fn new() -> ParameterSet {
        ParameterSet {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name `{name}`"
        );
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.names.push(name);
        self.values.push(value);
        self.grads.push(grad);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Multiplies every gradient by `s` (used to average over a mini-batch).
    pub fn scale_grads(&mut self, s: f64) {
        for g in &mut self.grads {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }

    pub fn grad_global_norm(&self) -> f64 {
        self.grads
            .iter()
            .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale_grads(max_norm / norm);
        }
        norm
    }

    /// One plain SGD update: theta <- theta - lr * grad, then zeroes all
    /// gradients. A non-finite gradient aborts naming the parameter.
    pub fn sgd_step(&mut self, learning_rate: f64) -> Result<()> {
        for (idx, grad) in self.grads.iter().enumerate() {
            if !grad.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of parameter `{}`", self.names[idx]),
                });
            }
        }
        for (value, grad) in self.values.iter_mut().zip(&self.grads) {
            for (v, g) in value.data_mut().iter_mut().zip(grad.data()) {
                *v -= learning_rate * g;
            }
        }
        self.zero_grads();
        Ok(())
    }

    /// Parameters in registration order, for checkpointing.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter())
    }

    /// Handles in registration order.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Frobenius norm per parameter, in registration order.
    pub fn norms(&self) -> Vec<(String, f64)> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| (n.clone(), v.norm()))
            .collect()
    }

    pub fn total_values(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }

    /// Replaces every value from a snapshot taken with [`Self::clone`].
    pub fn restore_values(&mut self, snapshot: &ParameterSet) {
        assert_eq!(self.len(), snapshot.len(), "snapshot layout mismatch");
        for (dst, src) in self.values.iter_mut().zip(&snapshot.values) {
            dst.data_mut().copy_from_slice(src.data());
        }
    }
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Uniform init in +-sqrt(6 / (fan_in + fan_out)), with rows read as fan_out
/// and cols as fan_in.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
}
