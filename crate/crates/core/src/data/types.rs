use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::distribution::ClassDistribution;
use crate::error::{Error, Result};

/// Canonical class names, in the fixed order used by every file format.
pub const EMOTION_NAMES: [&str; 7] = ["Angry", "Disgust", "Fear", "Happy", "Sad", "Neutral", "Surprise"];

/// Default number of classes.
pub const DEFAULT_CLASSES: usize = 7;
/// Default face-feature width produced by the upstream image network.
pub const DEFAULT_FEATURE_DIM: usize = 512;
/// Default per-clip audio descriptor width.
pub const DEFAULT_AUDIO_DIM: usize = 1582;

/// Index of an emotion class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionClass(pub usize);

impl EmotionClass {
    pub fn index(self) -> usize {
        self.0
    }

    /// Canonical name when the class count is the default seven.
    pub fn name(self) -> Option<&'static str> {
        EMOTION_NAMES.get(self.0).copied()
    }

    /// Parses either a canonical name (case-insensitive) or an integer index.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Ok(i) = s.parse::<usize>() {
            return Some(EmotionClass(i));
        }
        EMOTION_NAMES
            .iter()
            .position(|n| n.eq_ignore_ascii_case(s))
            .map(EmotionClass)
    }
}

impl fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => f.write_str(n),
            None => write!(f, "class{}", self.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One face frame as produced by the frozen image network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// Hidden representation of the face.
    #[serde(rename = "f")]
    pub feature: Vec<f64>,
    /// Per-class confidences; probabilities or logits, as stored upstream.
    #[serde(rename = "s")]
    pub scores: Vec<f64>,
    /// Arousal and valence.
    pub av: [f64; 2],
}

/// A labeled (or unlabeled) audiovisual clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub id: String,
    pub split: Split,
    pub label: Option<EmotionClass>,
    pub audio: Option<Vec<f64>>,
    pub frames: Vec<FrameRecord>,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Dataset-level dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub feature_dim: usize,
    pub classes: usize,
    /// `None` when no clip carries audio.
    pub audio_dim: Option<usize>,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            feature_dim: DEFAULT_FEATURE_DIM,
            classes: DEFAULT_CLASSES,
            audio_dim: Some(DEFAULT_AUDIO_DIM),
        }
    }
}

/// An immutable, validated collection of clips.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    clips: Vec<Clip>,
    dims: Dims,
    distributions: BTreeMap<Split, ClassDistribution>,
}

impl Dataset {
    /// Validates `clips` and infers dimensions from the first clip (audio
    /// width from the first clip that has audio).
    pub fn new(clips: Vec<Clip>) -> Result<Self> {
        let first = clips
            .first()
            .ok_or_else(|| Error::contract("dataset must contain at least one clip"))?;
        let frame = first.frames.first().ok_or_else(|| Error::Validation {
            clip: first.id.clone(),
            message: "clip has no frames".into(),
        })?;
        let dims = Dims {
            feature_dim: frame.feature.len(),
            classes: frame.scores.len(),
            audio_dim: clips.iter().find_map(|c| c.audio.as_ref().map(Vec::len)),
        };
        Self::with_dims(clips, dims)
    }

    /// Validates `clips` against explicitly declared dimensions.
    pub fn with_dims(clips: Vec<Clip>, dims: Dims) -> Result<Self> {
        if dims.feature_dim == 0 || dims.classes == 0 || dims.audio_dim == Some(0) {
            return Err(Error::contract("dataset dimensions must be positive"));
        }
        let mut seen = HashSet::new();
        for clip in &clips {
            validate_clip(clip, &dims)?;
            if !seen.insert(clip.id.as_str()) {
                return Err(Error::Validation {
                    clip: clip.id.clone(),
                    message: "duplicate clip id".into(),
                });
            }
        }
        let distributions = Split::ALL
            .iter()
            .map(|&split| {
                let mut counts = vec![0usize; dims.classes];
                for c in clips.iter().filter(|c| c.split == split) {
                    if let Some(l) = c.label {
                        counts[l.index()] += 1;
                    }
                }
                (split, ClassDistribution::new(counts))
            })
            .collect();
        Ok(Dataset {
            clips,
            dims,
            distributions,
        })
    }

    pub fn clips(&self) -> &[Clip] {
        &self.clips
    }

    pub fn into_clips(self) -> Vec<Clip> {
        self.clips
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn classes(&self) -> usize {
        self.dims.classes
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Clip> {
        self.clips.iter().find(|c| c.id == id)
    }

    /// Labeled-clip counts per class for one split.
    pub fn distribution(&self, split: Split) -> &ClassDistribution {
        &self.distributions[&split]
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Clip> {
        self.clips.iter().filter(move |c| c.split == split)
    }

    /// Labeled clips of one split, paired with their labels.
    pub fn labeled(&self, split: Split) -> impl Iterator<Item = (&Clip, EmotionClass)> {
        self.split(split).filter_map(|c| c.label.map(|l| (c, l)))
    }

    /// Builds a dataset from a subset of clips, keeping these dimensions.
    pub fn derive(&self, clips: Vec<Clip>) -> Result<Self> {
        Self::with_dims(clips, self.dims)
    }
}

fn validate_clip(clip: &Clip, dims: &Dims) -> Result<()> {
    let fail = |message: String| Error::Validation {
        clip: clip.id.clone(),
        message,
    };
    if clip.frames.is_empty() {
        return Err(fail("clip has no frames".into()));
    }
    if let Some(l) = clip.label {
        if l.index() >= dims.classes {
            return Err(fail(format!(
                "label {} out of range for {} classes",
                l.index(),
                dims.classes
            )));
        }
    }
    for (i, fr) in clip.frames.iter().enumerate() {
        if fr.feature.len() != dims.feature_dim {
            return Err(fail(format!(
                "frame {i} has {} features, expected {}",
                fr.feature.len(),
                dims.feature_dim
            )));
        }
        if fr.scores.len() != dims.classes {
            return Err(fail(format!(
                "frame {i} has {} scores, expected {}",
                fr.scores.len(),
                dims.classes
            )));
        }
        let finite = fr.feature.iter().chain(&fr.scores).chain(&fr.av).all(|v| v.is_finite());
        if !finite {
            return Err(fail(format!("frame {i} contains a non-finite value")));
        }
    }
    if let Some(audio) = &clip.audio {
        match dims.audio_dim {
            Some(d) if d == audio.len() => {}
            Some(d) => return Err(fail(format!("audio has {} values, expected {d}", audio.len()))),
            None => return Err(fail("audio present but dataset declares none".into())),
        }
        if !audio.iter().all(|v| v.is_finite()) {
            return Err(fail("audio contains a non-finite value".into()));
        }
    }
    Ok(())
}
