use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::tensor::ParamTensor;
use crate::error::Result;
use crate::rng::KernelRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// A differentiable map over a batch (`rows = samples`).
///
/// `forward` returns the activation together with everything `backward`
/// needs; `backward` accumulates parameter gradients and returns the gradient
/// with respect to the input. Given the same parameters, input, mode and rng
/// state, `forward` is bit-reproducible.
pub trait Layer {
    type Cache;

    fn forward(&mut self, input: &Array2<f64>, mode: Mode, rng: &mut KernelRng) -> Result<(Array2<f64>, Self::Cache)>;

    fn backward(&mut self, cache: &Self::Cache, grad_out: &Array2<f64>) -> Result<Array2<f64>>;

    fn params(&self) -> Vec<&ParamTensor>;

    fn params_mut(&mut self) -> Vec<&mut ParamTensor>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}
