//! Per-class score vectors and per-clip score tables (`clip_id,p0..p{C-1}` CSV).

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::EmotionClass;
use crate::error::{Error, Result};

/// Allowed drift of a score vector's sum from one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    /// Wraps `probs`, checking each component is in `[0, 1]` and the sum is
    /// within [`SUM_TOLERANCE`] of one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::contract("score vector must not be empty"));
        }
        if !probs.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)) {
            return Err(Error::contract(format!(
                "score components must lie in [0, 1]: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::contract(format!("scores sum to {sum}, not 1")));
        }
        Ok(ScoreVector(probs))
    }

    /// Divides non-negative weights by their sum.
    pub fn normalize(raw: Vec<f64>) -> Result<Self> {
        if !raw.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::contract("cannot normalize negative or non-finite scores"));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::contract("cannot normalize scores with zero sum"));
        }
        Self::new(raw.into_iter().map(|v| v / sum).collect())
    }

    pub fn uniform(classes: usize) -> Self {
        ScoreVector(vec![1.0 / classes as f64; classes])
    }

    pub fn one_hot(classes: usize, class: EmotionClass) -> Self {
        let mut v = vec![0.0; classes];
        v[class.index()] = 1.0;
        ScoreVector(v)
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn argmax(&self) -> EmotionClass {
        EmotionClass(argmax(&self.0))
    }
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Scores for a set of clips, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    classes: usize,
    rows: Vec<(String, ScoreVector)>,
    index: HashMap<String, usize>,
}

impl ScoreTable {
    pub fn new(classes: usize) -> Self {
        ScoreTable {
            classes,
            rows: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, scores: ScoreVector) -> Result<()> {
        let id = id.into();
        if scores.classes() != self.classes {
            return Err(Error::contract(format!(
                "clip `{id}` has {} scores, table expects {}",
                scores.classes(),
                self.classes
            )));
        }
        if self.index.contains_key(&id) {
            return Err(Error::contract(format!("duplicate clip `{id}` in score table")));
        }
        self.index.insert(id.clone(), self.rows.len());
        self.rows.push((id, scores));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ScoreVector> {
        self.index.get(id).map(|&i| &self.rows[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ScoreVector)> {
        self.rows.iter().map(|(id, s)| (id.as_str(), s))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(id, _)| id.as_str())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["clip_id".to_string()];
        header.extend((0..self.classes).map(|k| format!("p{k}")));
        w.write_record(&header)?;
        for (id, s) in &self.rows {
            let mut rec = vec![id.clone()];
            rec.extend(s.as_slice().iter().map(|p| p.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<scores>", e))?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let classes = headers.len().saturating_sub(1);
        let valid_header = headers.get(0) == Some("clip_id")
            && classes > 0
            && (0..classes).all(|k| headers.get(k + 1) == Some(format!("p{k}").as_str()));
        if !valid_header {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `clip_id,p0,...`".into(),
            });
        }
        let mut table = ScoreTable::new(classes);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let probs = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>().map_err(|e| Error::Parse {
                        line,
                        message: format!("bad score `{v}`: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let scores = ScoreVector::new(probs).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            table.insert(&rec[0], scores).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }
}
