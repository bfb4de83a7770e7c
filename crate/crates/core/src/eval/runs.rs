use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::par_map;

/// Accuracies of one configuration across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl RunStatistics {
    pub fn from_runs(seeds: Vec<u64>, accuracies: Vec<f64>) -> Result<Self> {
        if seeds.len() != accuracies.len() || seeds.is_empty() {
            return Err(Error::contract("need one accuracy per seed and at least one run"));
        }
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        Ok(RunStatistics {
            seeds,
            accuracies,
            mean,
            std: var.sqrt(),
        })
    }
}

impl fmt::Display for RunStatistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, a) in self.seeds.iter().zip(&self.accuracies) {
            writeln!(f, "seed {s:>6}: {a:.4}")?;
        }
        writeln!(
            f,
            "mean {:.4}  std {:.4}  (n={})",
            self.mean,
            self.std,
            self.seeds.len()
        )
    }
}

/// Runs `run` once per seed (up to `jobs` at a time) and aggregates.
pub fn repeated_runs<F>(seeds: &[u64], jobs: usize, run: F) -> Result<RunStatistics>
where
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    if seeds.len() < 2 {
        return Err(Error::config("repeated runs need at least 2 seeds"));
    }
    let accuracies = par_map(jobs, seeds.to_vec(), |s| {
        run(s).map_err(|e| Error::training(format!("run with seed {s} failed: {e}")))
    })?;
    RunStatistics::from_runs(seeds.to_vec(), accuracies)
}
