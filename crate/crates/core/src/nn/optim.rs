use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::tensor::ParamTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn sgd(momentum: f64) -> Self {
        OptimizerKind::SgdMomentum { momentum }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::SgdMomentum { .. } => "sgd",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
///
/// Buffers are created lazily on the first step and matched to parameters by
/// position; the parameter list must be passed in the same order every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub steps: u64,
    /// First moment (Adam) or velocity (SGD), per parameter.
    pub first: Vec<Array2<f64>>,
    /// Second moment (Adam only).
    pub second: Vec<Array2<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::config(format!("learning rate {learning_rate} must be positive")));
        }
        Ok(Optimizer {
            kind,
            learning_rate,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// Fails without modifying anything if any gradient is non-finite.
    pub fn step(&mut self, mut params: Vec<&mut ParamTensor>) -> Result<()> {
        for p in &params {
            if p.grad.dim() != p.values.dim() {
                return Err(Error::training(format!(
                    "parameter `{}` has no gradient buffer",
                    p.name
                )));
            }
            if !p.grad.iter().all(|g| g.is_finite()) {
                return Err(Error::training(format!(
                    "non-finite gradient in parameter `{}`",
                    p.name
                )));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Array2::zeros(p.values.raw_dim())).collect();
            if matches!(self.kind, OptimizerKind::Adam { .. }) {
                self.second = self.first.clone();
            }
        }
        let shapes_match =
            self.first.len() == params.len() && self.first.iter().zip(&params).all(|(b, p)| b.dim() == p.values.dim());
        if !shapes_match {
            return Err(Error::contract("optimizer buffers do not match the parameter list"));
        }
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for (p, v) in params.iter_mut().zip(&mut self.first) {
                    if momentum == 0.0 {
                        p.values.scaled_add(-lr, &p.grad);
                    } else {
                        *v *= momentum;
                        *v += &p.grad;
                        p.values.scaled_add(-lr, v);
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
                    m.zip_mut_with(&p.grad, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                    v.zip_mut_with(&p.grad, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
                    ndarray::Zip::from(&mut p.values)
                        .and(&*m)
                        .and(&*v)
                        .for_each(|w, &m, &v| {
                            *w -= lr * (m / c1) / ((v / c2).sqrt() + epsilon);
                        });
                }
            }
        }
        for p in params.iter_mut() {
            if !p.is_finite() {
                return Err(Error::training(format!("parameter `{}` became non-finite", p.name)));
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar(g: f64) -> ParamTensor {
        let mut p = ParamTensor::zeros("w", 1, 1);
        p.grad[[0, 0]] = g;
        p
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = scalar(1.0);
        Optimizer::new(OptimizerKind::sgd(0.0), 0.1)
            .unwrap()
            .step(vec![&mut p])
            .unwrap();
        assert_eq!(p.values[[0, 0]], -0.1);
        assert_eq!(p.grad[[0, 0]], 0.0);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = ParamTensor::from_values("w", array![[1.5, -2.0]]);
        Optimizer::new(OptimizerKind::sgd(0.0), 0.1)
            .unwrap()
            .step(vec![&mut p])
            .unwrap();
        assert_eq!(p.values, array![[1.5, -2.0]]);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut p = scalar(1.0);
        Optimizer::new(OptimizerKind::adam(), 0.001)
            .unwrap()
            .step(vec![&mut p])
            .unwrap();
        // m_hat = 1, v_hat = 1 -> -lr / (1 + 1e-8)
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.values[[0, 0]] - expected).abs() < 1e-15);
        assert!((p.values[[0, 0]] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let mut p = scalar(1.0);
        let mut opt = Optimizer::new(OptimizerKind::sgd(0.9), 0.1).unwrap();
        opt.step(vec![&mut p]).unwrap();
        p.grad[[0, 0]] = 1.0;
        opt.step(vec![&mut p]).unwrap();
        assert!((p.values[[0, 0]] - (-0.1 - 0.19)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar(f64::NAN);
        p.name = "head.weight".into();
        let err = Optimizer::new(OptimizerKind::adam(), 0.01)
            .unwrap()
            .step(vec![&mut p])
            .unwrap_err();
        assert!(err.to_string().contains("head.weight"));
        assert_eq!(p.values[[0, 0]], 0.0);
    }

    #[test]
    fn invalid_learning_rate() {
        assert!(Optimizer::new(OptimizerKind::adam(), 0.0).is_err());
    }
}
