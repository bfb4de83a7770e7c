use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::distribution::ClassDistribution;
use super::types::{Dataset, Dims, EmotionClass, Split};

/// Summary of a loaded dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub dims: Dims,
    pub clip_count: usize,
    pub distributions: BTreeMap<Split, ClassDistribution>,
    pub unlabeled: usize,
    pub missing_audio: Vec<String>,
    /// Clip length -> number of clips.
    pub length_histogram: BTreeMap<usize, usize>,
}

impl ValidationReport {
    pub fn missing_audio_fraction(&self) -> f64 {
        if self.clip_count == 0 {
            0.0
        } else {
            self.missing_audio.len() as f64 / self.clip_count as f64
        }
    }
}

pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut length_histogram = BTreeMap::new();
    for c in ds.clips() {
        *length_histogram.entry(c.len()).or_insert(0) += 1;
    }
    ValidationReport {
        dims: ds.dims(),
        clip_count: ds.len(),
        distributions: Split::ALL.iter().map(|&s| (s, ds.distribution(s).clone())).collect(),
        unlabeled: ds.clips().iter().filter(|c| c.label.is_none()).count(),
        missing_audio: ds
            .clips()
            .iter()
            .filter(|c| c.audio.is_none())
            .map(|c| c.id.clone())
            .collect(),
        length_histogram,
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let audio = match self.dims.audio_dim {
            Some(d) => d.to_string(),
            None => "absent".into(),
        };
        writeln!(
            f,
            "clips: {}  feature_dim: {}  classes: {}  audio_dim: {}",
            self.clip_count, self.dims.feature_dim, self.dims.classes, audio
        )?;
        write!(f, "{:<8}", "split")?;
        for k in 0..self.dims.classes {
            write!(f, "{:>9}", EmotionClass(k).to_string())?;
        }
        writeln!(f, "{:>9}", "total")?;
        for (split, d) in &self.distributions {
            write!(f, "{:<8}", split.as_str())?;
            for n in d.counts() {
                write!(f, "{n:>9}")?;
            }
            writeln!(f, "{:>9}", d.total())?;
        }
        writeln!(f, "unlabeled clips: {}", self.unlabeled)?;
        writeln!(
            f,
            "missing audio: {} of {} ({:.1}%)",
            self.missing_audio.len(),
            self.clip_count,
            100.0 * self.missing_audio_fraction()
        )?;
        write!(f, "length histogram:")?;
        for (len, n) in &self.length_histogram {
            write!(f, " {len}:{n}")?;
        }
        writeln!(f)
    }
}
