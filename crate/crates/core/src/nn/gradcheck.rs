//! Finite-difference gradient checking.
//!
//! Errors are reported as `|a - n| / max(|a|, |n|, 1e-8)` where `a` is the
//! analytic and `n` the central-difference derivative, maximized over every
//! coordinate checked.

use ndarray::Array2;
use rand::Rng;

use super::layer::{Layer, Mode};
use super::tensor::ParamTensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, KernelRng};

pub const DEFAULT_EPSILON: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` around `x0`.
pub fn check_gradient(x0: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64, epsilon: f64) -> f64 {
    assert_eq!(x0.len(), analytic.len(), "one analytic derivative per coordinate");
    let mut x = x0.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        x[i] = x0[i] + epsilon;
        let plus = f(&x);
        x[i] = x0[i] - epsilon;
        let minus = f(&x);
        x[i] = x0[i];
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// A scalar objective over a set of parameter tensors.
pub trait Objective {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor>;

    /// Objective value at the current parameters; must not touch gradients.
    fn loss(&mut self) -> Result<f64>;

    /// Objective value; accumulates d(loss)/d(param) into every `grad`.
    fn loss_and_grad(&mut self) -> Result<f64>;
}

fn flatten(params: &[&mut ParamTensor], grads: bool) -> Vec<f64> {
    params
        .iter()
        .flat_map(|p| if grads { p.grad.iter() } else { p.values.iter() })
        .copied()
        .collect()
}

fn load(obj: &mut impl Objective, theta: &[f64]) {
    let mut offset = 0;
    for p in obj.params_mut() {
        for (v, t) in p.values.iter_mut().zip(&theta[offset..]) {
            *v = *t;
        }
        offset += p.len();
    }
}

/// Checks every parameter coordinate of `obj`; parameters are restored.
pub fn grad_check_objective(obj: &mut impl Objective, epsilon: f64) -> Result<f64> {
    if epsilon <= 0.0 {
        return Err(Error::contract("gradient check epsilon must be positive"));
    }
    for p in obj.params_mut() {
        p.zero_grad();
    }
    obj.loss_and_grad()?;
    let (theta0, analytic) = {
        let params = obj.params_mut();
        (flatten(&params, false), flatten(&params, true))
    };
    let mut failure = None;
    let err = check_gradient(
        &theta0,
        &analytic,
        |theta| {
            load(obj, theta);
            match obj.loss() {
                Ok(l) => l,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        epsilon,
    );
    load(obj, &theta0);
    match failure {
        Some(e) => Err(e),
        None => Ok(err),
    }
}

/// Wraps a layer as the objective `sum(forward(input) * projection)`, with
/// the input itself treated as a parameter so input gradients are checked too.
/// Every forward replays the same rng state, so dropout masks are fixed.
struct LayerProbe<'a, L: Layer> {
    layer: &'a mut L,
    input: ParamTensor,
    projection: Array2<f64>,
    rng: KernelRng,
    mode: Mode,
}

impl<L: Layer> Objective for LayerProbe<'_, L> {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut ps = self.layer.params_mut();
        ps.push(&mut self.input);
        ps
    }

    fn loss(&mut self) -> Result<f64> {
        let (out, _) = self
            .layer
            .forward(&self.input.values, self.mode, &mut self.rng.clone())?;
        Ok((&out * &self.projection).sum())
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        let (out, cache) = self
            .layer
            .forward(&self.input.values, self.mode, &mut self.rng.clone())?;
        let gin = self.layer.backward(&cache, &self.projection)?;
        self.input.grad += &gin;
        Ok((&out * &self.projection).sum())
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut KernelRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Checks a layer's parameter and input gradients in train mode.
pub fn grad_check<L: Layer>(layer: &mut L, input: &Array2<f64>, epsilon: f64, seed: u64) -> Result<f64> {
    grad_check_mode(layer, input, Mode::Train, epsilon, seed)
}

pub fn grad_check_mode<L: Layer>(
    layer: &mut L,
    input: &Array2<f64>,
    mode: Mode,
    epsilon: f64,
    seed: u64,
) -> Result<f64> {
    let rng = rng_from_seed(derive_seed(seed, 0));
    let (out, _) = layer.forward(input, mode, &mut rng.clone())?;
    let projection = random_matrix(out.nrows(), out.ncols(), &mut rng_from_seed(derive_seed(seed, 1)));
    let mut probe = LayerProbe {
        layer,
        input: ParamTensor::from_values("input", input.clone()),
        projection,
        rng,
        mode,
    };
    grad_check_objective(&mut probe, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::Sigmoid;
    use crate::nn::batchnorm::BatchNorm;
    use crate::nn::linear::Linear;

    fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        random_matrix(rows, cols, &mut rng_from_seed(seed))
    }

    #[test]
    fn linear_layer_is_exact() {
        for seed in 0..10 {
            let mut l = Linear::new("l", 4, 3, &mut rng_from_seed(seed));
            let err = grad_check(&mut l, &random_input(5, 4, seed + 100), DEFAULT_EPSILON, seed).unwrap();
            assert!(err < 1e-7, "seed {seed}: {err}");
        }
    }

    #[test]
    fn sigmoid_and_batchnorm_pass() {
        for seed in 0..10 {
            let x = random_input(6, 3, seed);
            assert!(grad_check(&mut Sigmoid, &x, DEFAULT_EPSILON, seed).unwrap() < 1e-4);
            let mut bn = BatchNorm::new("bn", 3);
            bn.gamma.values = random_input(1, 3, seed + 7);
            bn.beta.values = random_input(1, 3, seed + 8);
            let err = grad_check(&mut bn, &x, DEFAULT_EPSILON, seed).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    /// A linear layer whose weight gradient is scaled by 1.5.
    struct Sabotaged(Linear);

    impl Layer for Sabotaged {
        type Cache = Array2<f64>;
        fn forward(&mut self, x: &Array2<f64>, m: Mode, r: &mut KernelRng) -> Result<(Array2<f64>, Array2<f64>)> {
            self.0.forward(x, m, r)
        }
        fn backward(&mut self, cache: &Array2<f64>, g: &Array2<f64>) -> Result<Array2<f64>> {
            let gin = self.0.backward(cache, g)?;
            self.0.weight.grad.mapv_inplace(|v| v * 1.5);
            Ok(gin)
        }
        fn params(&self) -> Vec<&ParamTensor> {
            self.0.params()
        }
        fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
            self.0.params_mut()
        }
    }

    #[test]
    fn corrupted_backward_is_detected() {
        let mut s = Sabotaged(Linear::new("s", 3, 2, &mut rng_from_seed(1)));
        let err = grad_check(&mut s, &random_input(4, 3, 2), DEFAULT_EPSILON, 3).unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn parameters_restored_after_check() {
        let mut l = Linear::new("l", 3, 2, &mut rng_from_seed(5));
        let before = l.clone();
        grad_check(&mut l, &random_input(2, 3, 1), DEFAULT_EPSILON, 0).unwrap();
        assert_eq!(l.weight.values, before.weight.values);
    }
}
