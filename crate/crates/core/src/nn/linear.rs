use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::layer::{Layer, Mode};
use super::tensor::ParamTensor;
use crate::error::{Error, Result};
use crate::rng::KernelRng;

/// `y = x W^T + b`, with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamTensor,
    pub bias: Option<ParamTensor>,
}

impl Linear {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut KernelRng) -> Self {
        Linear {
            weight: ParamTensor::glorot(format!("{name}.weight"), outputs, inputs, rng),
            bias: Some(ParamTensor::zeros(format!("{name}.bias"), 1, outputs)),
        }
    }

    /// Linear map without a bias term (used in front of batch-norm).
    pub fn without_bias(name: &str, inputs: usize, outputs: usize, rng: &mut KernelRng) -> Self {
        Linear {
            weight: ParamTensor::glorot(format!("{name}.weight"), outputs, inputs, rng),
            bias: None,
        }
    }

    pub fn from_parts(name: &str, weight: Array2<f64>, bias: Option<Array2<f64>>) -> Self {
        Linear {
            weight: ParamTensor::from_values(format!("{name}.weight"), weight),
            bias: bias.map(|b| ParamTensor::from_values(format!("{name}.bias"), b)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.values.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.values.nrows()
    }

    /// Forward pass without caching; used at inference.
    pub fn apply(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.inputs() {
            return Err(Error::contract(format!(
                "{}: input width {} does not match {}",
                self.weight.name,
                input.ncols(),
                self.inputs()
            )));
        }
        let mut y = input.dot(&self.weight.values.t());
        if let Some(b) = &self.bias {
            y += &b.values;
        }
        Ok(y)
    }
}

impl Layer for Linear {
    type Cache = Array2<f64>;

    fn forward(
        &mut self,
        input: &Array2<f64>,
        _mode: Mode,
        _rng: &mut KernelRng,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        Ok((self.apply(input)?, input.clone()))
    }

    fn backward(&mut self, input: &Array2<f64>, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        if grad_out.dim() != (input.nrows(), self.outputs()) {
            return Err(Error::contract(format!(
                "{}: gradient shape {:?} does not match cached forward",
                self.weight.name,
                grad_out.dim()
            )));
        }
        self.weight.grad += &grad_out.t().dot(input);
        if let Some(b) = &mut self.bias {
            b.grad += &grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        Ok(grad_out.dot(&self.weight.values))
    }

    fn params(&self) -> Vec<&ParamTensor> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::array;

    #[test]
    fn identity_weights_pass_input_through() {
        let mut l = Linear::from_parts("id", Array2::eye(3), Some(Array2::zeros((1, 3))));
        let x = array![[1.0, -2.0, 3.5]];
        let (y, _) = l.forward(&x, Mode::Eval, &mut rng_from_seed(0)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn backward_matches_analytic_form() {
        let w = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let mut l = Linear::from_parts("l", w.clone(), Some(Array2::zeros((1, 3))));
        let x = array![[0.5, -1.0]];
        let g = array![[1.0, 0.0, -2.0]];
        let (_, cache) = l.forward(&x, Mode::Train, &mut rng_from_seed(0)).unwrap();
        let gin = l.backward(&cache, &g).unwrap();
        assert_eq!(gin, g.dot(&w));
        assert_eq!(l.weight.grad, g.t().dot(&x));
        assert_eq!(l.bias.as_ref().unwrap().grad, g);
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let mut l = Linear::new("l", 3, 2, &mut rng_from_seed(1));
        let x = Array2::zeros((1, 4));
        assert!(matches!(
            l.forward(&x, Mode::Eval, &mut rng_from_seed(0)),
            Err(Error::Contract(_))
        ));
        let cache = Array2::zeros((1, 3));
        assert!(l.backward(&cache, &Array2::zeros((2, 2))).is_err());
    }
}
