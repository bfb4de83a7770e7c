//! A small differentiable kernel with explicit forward and backward passes.
//!
//! All math runs in `f64`. Layers operate on batches stored as
//! `Array2<f64>` (one row per sample, or per time step for [`Lstm`]).

mod activation;
mod batchnorm;
mod checkpoint;
pub mod gradcheck;
mod history;
mod layer;
mod linear;
mod loss;
mod lstm;
mod mlp;
mod optim;
mod tensor;

pub use activation::{sigmoid, Dropout, Relu, Sigmoid};
pub use batchnorm::{BatchNorm, BatchNormCache, BN_EPSILON, BN_MOMENTUM};
pub use checkpoint::{Checkpoint, OptimizerRecord, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradient, grad_check, grad_check_objective, Objective};
pub use history::{EpochRecord, TrainingLog};
pub use layer::{Layer, Mode};
pub use linear::Linear;
pub use loss::{batch_cross_entropy, softmax, softmax_cross_entropy, CrossEntropy};
pub use lstm::{lstm_step, Lstm, LstmCache, LstmParams, LstmState, FORGET_BIAS_INIT};
pub use mlp::{MlpCache, MlpHead};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::ParamTensor;
