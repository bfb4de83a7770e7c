//! Versioned JSON checkpoint container.
//!
//! Layout (version 1):
//!
//! ```text
//! {
//!   "format": "smallclip-checkpoint",
//!   "version": 1,
//!   "kind": "video" | "audio-mlp" | "audio-forest",
//!   "meta": { "<key>": "<string value>", ... },
//!   "params": { "<param name>": { "shape": [rows, cols], "values": [row-major f64...] }, ... },
//!   "buffers": { "<buffer name>": { "shape": [...], "values": [...] }, ... },
//!   "optimizer": null | {
//!       "kind": {"kind": "adam", "beta1": .., "beta2": .., "epsilon": ..} | {"kind": "sgd-momentum", "momentum": ..},
//!       "learning_rate": f64, "steps": u64,
//!       "first": { "<param name>": tensor }, "second": { "<param name>": tensor }
//!   },
//!   "structure": null | <model-specific JSON, e.g. forest trees>
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerKind};
use super::tensor::ParamTensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "smallclip-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl TensorRecord {
    pub fn from_array(a: &Array2<f64>) -> Self {
        TensorRecord {
            shape: [a.nrows(), a.ncols()],
            values: a.iter().copied().collect(),
        }
    }

    pub fn to_array(&self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.shape[0], self.shape[1]), self.values.clone())
            .map_err(|e| Error::contract(format!("checkpoint tensor shape mismatch: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRecord {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub steps: u64,
    pub first: BTreeMap<String, TensorRecord>,
    pub second: BTreeMap<String, TensorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub params: BTreeMap<String, TensorRecord>,
    pub buffers: BTreeMap<String, TensorRecord>,
    pub optimizer: Option<OptimizerRecord>,
    pub structure: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: kind.into(),
            meta: BTreeMap::new(),
            params: BTreeMap::new(),
            buffers: BTreeMap::new(),
            optimizer: None,
            structure: None,
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::config(format!("checkpoint lacks meta key `{key}`")))
    }

    pub fn insert_params<'a>(&mut self, params: impl IntoIterator<Item = &'a ParamTensor>) {
        for p in params {
            self.params.insert(p.name.clone(), TensorRecord::from_array(&p.values));
        }
    }

    pub fn insert_buffer(&mut self, name: &str, a: &Array2<f64>) {
        self.buffers.insert(name.into(), TensorRecord::from_array(a));
    }

    pub fn buffer(&self, name: &str) -> Result<Array2<f64>> {
        self.buffers
            .get(name)
            .ok_or_else(|| Error::config(format!("checkpoint lacks buffer `{name}`")))?
            .to_array()
    }

    /// Copies stored values into `params` by name, checking shapes.
    pub fn restore_params(&self, params: Vec<&mut ParamTensor>) -> Result<()> {
        for p in params {
            let rec = self
                .params
                .get(&p.name)
                .ok_or_else(|| Error::config(format!("checkpoint lacks parameter `{}`", p.name)))?;
            let values = rec.to_array()?;
            if values.dim() != p.values.dim() {
                return Err(Error::config(format!(
                    "parameter `{}` has shape {:?} in checkpoint, model expects {:?}",
                    p.name,
                    values.dim(),
                    p.values.dim()
                )));
            }
            p.values = values;
            p.zero_grad();
        }
        Ok(())
    }

    pub fn insert_optimizer(&mut self, opt: &Optimizer, params: &[&ParamTensor]) {
        let named = |bufs: &[Array2<f64>]| {
            params
                .iter()
                .zip(bufs)
                .map(|(p, b)| (p.name.clone(), TensorRecord::from_array(b)))
                .collect()
        };
        self.optimizer = Some(OptimizerRecord {
            kind: opt.kind,
            learning_rate: opt.learning_rate,
            steps: opt.steps,
            first: named(&opt.first),
            second: named(&opt.second),
        });
    }

    pub fn restore_optimizer(&self, params: &[&ParamTensor]) -> Result<Option<Optimizer>> {
        let Some(rec) = &self.optimizer else { return Ok(None) };
        let collect = |bufs: &BTreeMap<String, TensorRecord>| -> Result<Vec<Array2<f64>>> {
            if bufs.is_empty() {
                return Ok(Vec::new());
            }
            params
                .iter()
                .map(|p| {
                    bufs.get(&p.name)
                        .ok_or_else(|| Error::config(format!("optimizer state lacks `{}`", p.name)))?
                        .to_array()
                })
                .collect()
        };
        Ok(Some(Optimizer {
            kind: rec.kind,
            learning_rate: rec.learning_rate,
            steps: rec.steps,
            first: collect(&rec.first)?,
            second: collect(&rec.second)?,
        }))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("checkpoint serialization cannot fail");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_slice(bytes)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::config(format!("not a checkpoint (format `{}`)", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::config(format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Layer;
    use crate::nn::mlp::MlpHead;
    use crate::rng::rng_from_seed;

    #[test]
    fn params_and_optimizer_round_trip() {
        let mut rng = rng_from_seed(3);
        let mut mlp = MlpHead::new("mlp", 4, 3, 2, 0.1, &mut rng).unwrap();
        for p in mlp.params_mut() {
            p.grad.fill(0.25);
        }
        let mut opt = Optimizer::new(OptimizerKind::adam(), 0.01).unwrap();
        opt.step(mlp.params_mut()).unwrap();

        let mut ck = Checkpoint::new("test");
        ck.insert_params(mlp.params());
        ck.insert_optimizer(&opt, &mlp.params());
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);

        let mut fresh = MlpHead::new("mlp", 4, 3, 2, 0.1, &mut rng_from_seed(99)).unwrap();
        back.restore_params(fresh.params_mut()).unwrap();
        assert_eq!(fresh.params(), mlp.params());
        assert_eq!(back.restore_optimizer(&fresh.params()).unwrap().unwrap(), opt);
    }

    #[test]
    fn wrong_format_rejected() {
        let mut ck = Checkpoint::new("x");
        ck.format = "other".into();
        assert!(Checkpoint::from_bytes(&ck.to_bytes()).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = rng_from_seed(0);
        let a = MlpHead::new("mlp", 4, 3, 2, 0.0, &mut rng).unwrap();
        let mut b = MlpHead::new("mlp", 5, 3, 2, 0.0, &mut rng).unwrap();
        let mut ck = Checkpoint::new("x");
        ck.insert_params(a.params());
        assert!(ck.restore_params(b.params_mut()).is_err());
    }
}
