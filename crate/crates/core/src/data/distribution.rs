use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::EmotionClass;
use crate::error::{Error, Result};

/// Per-class clip counts for one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    counts: Vec<usize>,
    total: usize,
}

/// AFEW train split counts, canonical class order.
pub const AFEW_TRAIN_COUNTS: [usize; 7] = [133, 74, 81, 150, 117, 144, 74];
/// AFEW validation split counts, canonical class order.
pub const AFEW_VAL_COUNTS: [usize; 7] = [64, 40, 46, 63, 61, 63, 46];
/// AFEW test split counts, canonical class order.
pub const AFEW_TEST_COUNTS: [usize; 7] = [99, 40, 70, 144, 80, 191, 29];

impl ClassDistribution {
    pub fn new(counts: Vec<usize>) -> Self {
        let total = counts.iter().sum();
        ClassDistribution { counts, total }
    }

    pub fn afew_train() -> Self {
        Self::new(AFEW_TRAIN_COUNTS.to_vec())
    }

    pub fn afew_val() -> Self {
        Self::new(AFEW_VAL_COUNTS.to_vec())
    }

    pub fn afew_test() -> Self {
        Self::new(AFEW_TEST_COUNTS.to_vec())
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    /// Class proportions `n_i / total`; all zeros for an empty distribution.
    pub fn proportions(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&n| n as f64 / self.total as f64).collect()
    }

    /// Reads the `class,count` CSV format. Rows must follow canonical order;
    /// class may be a name or an index.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "class" || &headers[1] != "count" {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `class,count`".into(),
            });
        }
        let mut counts = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let class = EmotionClass::parse(&rec[0]).ok_or_else(|| Error::Parse {
                line,
                message: format!("unknown class `{}`", &rec[0]),
            })?;
            if class.index() != counts.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("class `{}` out of canonical order", &rec[0]),
                });
            }
            let n = rec[1].parse::<usize>().map_err(|e| Error::Parse {
                line,
                message: format!("bad count `{}`: {e}", &rec[1]),
            })?;
            counts.push(n);
        }
        if counts.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "distribution file has no rows".into(),
            });
        }
        Ok(Self::new(counts))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["class", "count"])?;
        for (i, n) in self.counts.iter().enumerate() {
            w.write_record([EmotionClass(i).to_string(), n.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<distribution>", e))?;
        Ok(())
    }
}
