use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::layer::{Layer, Mode};
use super::tensor::ParamTensor;
use crate::error::{Error, Result};
use crate::rng::KernelRng;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch normalization over the feature columns.
///
/// Train mode normalizes with the batch mean and biased variance and folds
/// them into running statistics (`running = (1 - momentum) * running +
/// momentum * batch`, unbiased variance). Eval mode is the fixed affine map
/// built from the running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: ParamTensor,
    pub beta: ParamTensor,
    pub running_mean: Array2<f64>,
    pub running_var: Array2<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

pub enum BatchNormCache {
    Train { xhat: Array2<f64>, inv_std: Array2<f64> },
    Eval { inv_std: Array2<f64> },
}

impl BatchNorm {
    pub fn new(name: &str, features: usize) -> Self {
        BatchNorm {
            gamma: ParamTensor::from_values(format!("{name}.gamma"), Array2::ones((1, features))),
            beta: ParamTensor::zeros(format!("{name}.beta"), 1, features),
            running_mean: Array2::zeros((1, features)),
            running_var: Array2::ones((1, features)),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.values.ncols()
    }
}

impl Layer for BatchNorm {
    type Cache = BatchNormCache;

    fn forward(
        &mut self,
        input: &Array2<f64>,
        mode: Mode,
        _rng: &mut KernelRng,
    ) -> Result<(Array2<f64>, BatchNormCache)> {
        if input.ncols() != self.features() || input.nrows() == 0 {
            return Err(Error::contract(format!(
                "{}: input shape {:?} incompatible with {} features",
                self.gamma.name,
                input.dim(),
                self.features()
            )));
        }
        match mode {
            Mode::Train => {
                let n = input.nrows() as f64;
                let mean = input.sum_axis(Axis(0)).insert_axis(Axis(0)) / n;
                let centered = input - &mean;
                let var = (&centered * &centered).sum_axis(Axis(0)).insert_axis(Axis(0)) / n;
                let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
                let xhat = &centered * &inv_std;
                let y = &xhat * &self.gamma.values + &self.beta.values;
                let unbiased = if input.nrows() > 1 {
                    &var * (n / (n - 1.0))
                } else {
                    var.clone()
                };
                let m = self.momentum;
                self.running_mean = &self.running_mean * (1.0 - m) + &mean * m;
                self.running_var = &self.running_var * (1.0 - m) + &unbiased * m;
                Ok((y, BatchNormCache::Train { xhat, inv_std }))
            }
            Mode::Eval => {
                let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
                let y = (input - &self.running_mean) * &inv_std * &self.gamma.values + &self.beta.values;
                Ok((y, BatchNormCache::Eval { inv_std }))
            }
        }
    }

    fn backward(&mut self, cache: &BatchNormCache, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        if grad_out.ncols() != self.features() {
            return Err(Error::contract(format!("{}: gradient width mismatch", self.gamma.name)));
        }
        match cache {
            BatchNormCache::Train { xhat, inv_std } => {
                if xhat.dim() != grad_out.dim() {
                    return Err(Error::contract(format!("{}: gradient shape mismatch", self.gamma.name)));
                }
                let n = grad_out.nrows() as f64;
                self.gamma.grad += &(grad_out * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                self.beta.grad += &grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
                let dxhat = grad_out * &self.gamma.values;
                let sum_d = dxhat.sum_axis(Axis(0)).insert_axis(Axis(0));
                let sum_dx = (&dxhat * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                let dx = (dxhat * n - &sum_d - xhat * &sum_dx) * inv_std / n;
                Ok(dx)
            }
            BatchNormCache::Eval { inv_std } => {
                // Eval-mode gradients w.r.t. gamma/beta are not needed for training.
                Ok(grad_out * &self.gamma.values * inv_std)
            }
        }
    }

    fn params(&self) -> Vec<&ParamTensor> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::array;

    #[test]
    fn train_mode_normalizes_small_batch() {
        let mut bn = BatchNorm::new("bn", 1);
        let (y, _) = bn
            .forward(&array![[1.0], [3.0]], Mode::Train, &mut rng_from_seed(0))
            .unwrap();
        // mean 2, biased variance 1
        assert!((y[[0, 0]] + 1.0).abs() < 1e-4);
        assert!((y[[1, 0]] - 1.0).abs() < 1e-4);
        assert!((bn.running_mean[[0, 0]] - 0.2).abs() < 1e-12);
        assert!((bn.running_var[[0, 0]] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_is_batch_independent_affine_map() {
        let mut bn = BatchNorm::new("bn", 2);
        bn.running_mean = array![[0.5, -1.0]];
        bn.running_var = array![[4.0, 0.25]];
        bn.gamma.values = array![[2.0, 1.0]];
        bn.beta.values = array![[0.1, 0.0]];
        let mut rng = rng_from_seed(0);
        let single = bn.forward(&array![[1.0, 1.0]], Mode::Eval, &mut rng).unwrap().0;
        let batch = bn
            .forward(&array![[1.0, 1.0], [100.0, -7.0], [3.0, 3.0]], Mode::Eval, &mut rng)
            .unwrap()
            .0;
        assert_eq!(single.row(0), batch.row(0));
        let expected0 = 2.0 * 0.5 / (4.0 + BN_EPSILON).sqrt() + 0.1;
        assert!((single[[0, 0]] - expected0).abs() < 1e-12);
    }
}
