use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::activation::{Dropout, Relu};
use super::batchnorm::{BatchNorm, BatchNormCache};
use super::layer::{Layer, Mode};
use super::linear::Linear;
use super::tensor::ParamTensor;
use crate::error::{Error, Result};
use crate::rng::KernelRng;

/// `linear -> batch-norm -> relu -> dropout -> linear`.
///
/// The hidden linear map has no bias: batch-norm's shift takes that role and
/// a bias in front of it would receive an identically zero gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    pub hidden: Linear,
    pub norm: BatchNorm,
    pub dropout: Dropout,
    pub output: Linear,
}

pub struct MlpCache {
    hidden: Array2<f64>,
    norm: BatchNormCache,
    relu: Array2<f64>,
    dropout: Option<Array2<f64>>,
    output: Array2<f64>,
}

impl MlpHead {
    pub fn new(
        name: &str,
        inputs: usize,
        hidden: usize,
        outputs: usize,
        dropout: f64,
        rng: &mut KernelRng,
    ) -> Result<Self> {
        if hidden == 0 || inputs == 0 || outputs == 0 {
            return Err(Error::config("MLP layer sizes must be positive"));
        }
        Ok(MlpHead {
            hidden: Linear::without_bias(&format!("{name}.hidden"), inputs, hidden, rng),
            norm: BatchNorm::new(&format!("{name}.bn"), hidden),
            dropout: Dropout::new(dropout)?,
            output: Linear::new(&format!("{name}.output"), hidden, outputs, rng),
        })
    }

    pub fn inputs(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn outputs(&self) -> usize {
        self.output.outputs()
    }
}

impl Layer for MlpHead {
    type Cache = MlpCache;

    fn forward(&mut self, input: &Array2<f64>, mode: Mode, rng: &mut KernelRng) -> Result<(Array2<f64>, MlpCache)> {
        let (h, hidden) = self.hidden.forward(input, mode, rng)?;
        let (n, norm) = self.norm.forward(&h, mode, rng)?;
        let (r, relu) = Relu.forward(&n, mode, rng)?;
        let (d, dropout) = self.dropout.forward(&r, mode, rng)?;
        let (y, output) = self.output.forward(&d, mode, rng)?;
        Ok((
            y,
            MlpCache {
                hidden,
                norm,
                relu,
                dropout,
                output,
            },
        ))
    }

    fn backward(&mut self, cache: &MlpCache, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        let g = self.output.backward(&cache.output, grad_out)?;
        let g = self.dropout.backward(&cache.dropout, &g)?;
        let g = Relu.backward(&cache.relu, &g)?;
        let g = self.norm.backward(&cache.norm, &g)?;
        self.hidden.backward(&cache.hidden, &g)
    }

    fn params(&self) -> Vec<&ParamTensor> {
        let mut ps = self.hidden.params();
        ps.extend(self.norm.params());
        ps.extend(self.output.params());
        ps
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut ps = self.hidden.params_mut();
        ps.extend(self.norm.params_mut());
        ps.extend(self.output.params_mut());
        ps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, DEFAULT_EPSILON};
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn matches_finite_differences() {
        for seed in 0..10 {
            let mut rng = rng_from_seed(seed);
            let mut mlp = MlpHead::new("mlp", 5, 6, 4, 0.0, &mut rng).unwrap();
            let x = Array2::from_shape_simple_fn((8, 5), || rng.random_range(-2.0..2.0));
            let err = grad_check(&mut mlp, &x, DEFAULT_EPSILON, seed).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn matches_finite_differences_with_fixed_dropout_mask() {
        let mut rng = rng_from_seed(11);
        let mut mlp = MlpHead::new("mlp", 5, 6, 4, 0.3, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((8, 5), || rng.random_range(-2.0..2.0));
        assert!(grad_check(&mut mlp, &x, DEFAULT_EPSILON, 11).unwrap() < 1e-4);
    }

    #[test]
    fn zero_hidden_units_rejected() {
        assert!(MlpHead::new("m", 3, 0, 2, 0.0, &mut rng_from_seed(0)).is_err());
        assert!(MlpHead::new("m", 3, 2, 2, 1.0, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn forward_is_reproducible() {
        let mut rng = rng_from_seed(2);
        let mut mlp = MlpHead::new("m", 3, 4, 2, 0.5, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-1.0..1.0));
        let a = mlp.clone().forward(&x, Mode::Train, &mut rng_from_seed(9)).unwrap().0;
        let b = mlp.forward(&x, Mode::Train, &mut rng_from_seed(9)).unwrap().0;
        assert_eq!(a, b);
    }
}
