use crate::audio::{train_audio_model, AudioModel};
use crate::config::{AudioConfig, TrainConfig};
use crate::data::{Clip, Dataset};
use crate::error::{Error, Result};
use crate::rng::par_map;
use crate::scores::{ScoreTable, ScoreVector};
use crate::video::{train_video_model, VideoModel};

use super::fuse::fuse_mean;

/// Anything that maps a clip to class scores.
pub trait Predictor {
    fn classes(&self) -> usize;

    /// Whether the model can score `clip` at all (audio models need audio).
    fn accepts(&self, clip: &Clip) -> bool;

    fn predict_clip(&self, clip: &Clip) -> Result<ScoreVector>;
}

impl Predictor for VideoModel {
    fn classes(&self) -> usize {
        self.classes
    }

    fn accepts(&self, _clip: &Clip) -> bool {
        true
    }

    fn predict_clip(&self, clip: &Clip) -> Result<ScoreVector> {
        self.predict(clip)
    }
}

impl Predictor for AudioModel {
    fn classes(&self) -> usize {
        self.classes
    }

    fn accepts(&self, clip: &Clip) -> bool {
        clip.audio.is_some()
    }

    fn predict_clip(&self, clip: &Clip) -> Result<ScoreVector> {
        self.predict(clip)
    }
}

/// Mean of the members' score vectors.
pub fn ensemble_predict<M: Predictor>(models: &[M], clip: &Clip) -> Result<ScoreVector> {
    let first = models
        .first()
        .ok_or_else(|| Error::contract("ensemble has no members"))?;
    if models.iter().any(|m| m.classes() != first.classes()) {
        return Err(Error::contract("ensemble members disagree on the class count"));
    }
    let scores = models
        .iter()
        .map(|m| m.predict_clip(clip))
        .collect::<Result<Vec<_>>>()?;
    fuse_mean(&scores.iter().collect::<Vec<_>>())
}

/// Ensemble scores for every clip the members accept, computed on up to
/// `jobs` threads. Row order follows `clips`.
pub fn ensemble_table<'a, M, I>(models: &[M], clips: I, jobs: usize) -> Result<ScoreTable>
where
    M: Predictor + Sync,
    I: IntoIterator<Item = &'a Clip>,
{
    let first = models
        .first()
        .ok_or_else(|| Error::contract("ensemble has no members"))?;
    let accepted: Vec<&Clip> = clips.into_iter().filter(|c| first.accepts(c)).collect();
    let scores = par_map(jobs, accepted.clone(), |c| ensemble_predict(models, c))?;
    let mut table = ScoreTable::new(first.classes());
    for (clip, s) in accepted.into_iter().zip(scores) {
        table.insert(clip.id.clone(), s)?;
    }
    Ok(table)
}

/// Seed of ensemble member `index`: `seed + index`.
pub fn member_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// Trains `members` video models that differ only in their seeds.
pub fn train_video_ensemble(
    ds: &Dataset,
    config: &TrainConfig,
    seed: u64,
    members: usize,
    jobs: usize,
) -> Result<Vec<VideoModel>> {
    if members == 0 {
        return Err(Error::config("an ensemble needs at least one member"));
    }
    par_map(jobs, (0..members).collect(), |i| {
        train_video_model(ds, config, member_seed(seed, i))
            .map(|(m, _)| m)
            .map_err(|e| Error::training(format!("member {i}: {e}")))
    })
}

/// Trains `members` audio models that differ only in their seeds.
pub fn train_audio_ensemble(
    ds: &Dataset,
    config: &AudioConfig,
    seed: u64,
    members: usize,
    jobs: usize,
    pretrain: Option<&Dataset>,
) -> Result<Vec<AudioModel>> {
    if members == 0 {
        return Err(Error::config("an ensemble needs at least one member"));
    }
    par_map(jobs, (0..members).collect(), |i| {
        train_audio_model(ds, config, member_seed(seed, i), pretrain)
            .map(|(m, _)| m)
            .map_err(|e| Error::training(format!("member {i}: {e}")))
    })
}
