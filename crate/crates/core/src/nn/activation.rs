use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Layer, Mode};
use super::tensor::ParamTensor;
use crate::error::{Error, Result};
use crate::rng::KernelRng;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_same(what: &str, a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::contract(format!(
            "{what}: gradient shape {:?} does not match cached forward {:?}",
            b.dim(),
            a.dim()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Relu;

impl Layer for Relu {
    type Cache = Array2<f64>;

    fn forward(
        &mut self,
        input: &Array2<f64>,
        _mode: Mode,
        _rng: &mut KernelRng,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        Ok((input.mapv(|v| v.max(0.0)), input.clone()))
    }

    fn backward(&mut self, input: &Array2<f64>, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        check_same("relu", input, grad_out)?;
        let mut g = grad_out.clone();
        g.zip_mut_with(input, |g, &x| {
            if x <= 0.0 {
                *g = 0.0
            }
        });
        Ok(g)
    }

    fn params(&self) -> Vec<&ParamTensor> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sigmoid;

impl Layer for Sigmoid {
    /// The forward output.
    type Cache = Array2<f64>;

    fn forward(
        &mut self,
        input: &Array2<f64>,
        _mode: Mode,
        _rng: &mut KernelRng,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let y = input.mapv(sigmoid);
        Ok((y.clone(), y))
    }

    fn backward(&mut self, y: &Array2<f64>, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        check_same("sigmoid", y, grad_out)?;
        Ok(grad_out * &y.mapv(|s| s * (1.0 - s)))
    }

    fn params(&self) -> Vec<&ParamTensor> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        Vec::new()
    }
}

/// Inverted dropout: at train time each unit is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; eval is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Layer for Dropout {
    /// Per-unit multiplier (0 or `1 / (1 - rate)`); `None` when inactive.
    type Cache = Option<Array2<f64>>;

    fn forward(&mut self, input: &Array2<f64>, mode: Mode, rng: &mut KernelRng) -> Result<(Array2<f64>, Self::Cache)> {
        if mode == Mode::Eval || self.rate == 0.0 {
            return Ok((input.clone(), None));
        }
        let keep = 1.0 - self.rate;
        let mask = Array2::from_shape_simple_fn(input.raw_dim(), || {
            if rng.random::<f64>() < self.rate {
                0.0
            } else {
                1.0 / keep
            }
        });
        Ok((input * &mask, Some(mask)))
    }

    fn backward(&mut self, mask: &Self::Cache, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        match mask {
            None => Ok(grad_out.clone()),
            Some(m) => {
                check_same("dropout", m, grad_out)?;
                Ok(grad_out * m)
            }
        }
    }

    fn params(&self) -> Vec<&ParamTensor> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::array;

    #[test]
    fn relu_backward_masks_negative_inputs() {
        let mut r = Relu;
        let x = array![[-1.0, 2.0]];
        let (_, cache) = r.forward(&x, Mode::Train, &mut rng_from_seed(0)).unwrap();
        assert_eq!(r.backward(&cache, &array![[1.0, 1.0]]).unwrap(), array![[0.0, 1.0]]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut d = Dropout::new(0.5).unwrap();
        let x = array![[1.0, -2.0, 3.0]];
        let (y, _) = d.forward(&x, Mode::Eval, &mut rng_from_seed(0)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_rate_validated() {
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
    }

    #[test]
    fn dropout_drop_fraction_passes_chi_square() {
        let p = 0.3;
        let n = 10_000usize;
        let mut d = Dropout::new(p).unwrap();
        let x = Array2::ones((1, n));
        let (y, _) = d.forward(&x, Mode::Train, &mut rng_from_seed(42)).unwrap();
        let dropped = y.iter().filter(|&&v| v == 0.0).count() as f64;
        let kept = n as f64 - dropped;
        let (e_drop, e_keep) = (p * n as f64, (1.0 - p) * n as f64);
        let chi2 = (dropped - e_drop).powi(2) / e_drop + (kept - e_keep).powi(2) / e_keep;
        // 1 degree of freedom, 99.9th percentile.
        assert!(chi2 < 10.83, "chi2 = {chi2}");
        for &v in y.iter().filter(|&&v| v != 0.0) {
            assert!((v - 1.0 / (1.0 - p)).abs() < 1e-12);
        }
    }
}
