use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::KernelRng;

/// A named trainable array with its accumulated gradient.
///
/// Vectors are stored as `1 x n` rows so that biases broadcast over a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub values: Array2<f64>,
    #[serde(skip, default = "empty")]
    pub grad: Array2<f64>,
}

fn empty() -> Array2<f64> {
    Array2::zeros((0, 0))
}

impl ParamTensor {
    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::from_values(name, Array2::zeros((rows, cols)))
    }

    pub fn from_values(name: impl Into<String>, values: Array2<f64>) -> Self {
        let grad = Array2::zeros(values.raw_dim());
        ParamTensor {
            name: name.into(),
            values,
            grad,
        }
    }

    /// Glorot-uniform initialization: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(name: impl Into<String>, rows: usize, cols: usize, rng: &mut KernelRng) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let values = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a));
        Self::from_values(name, values)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        if self.grad.dim() != self.values.dim() {
            self.grad = Array2::zeros(self.values.raw_dim());
        } else {
            self.grad.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
