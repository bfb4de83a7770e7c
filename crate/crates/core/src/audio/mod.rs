//! Audio heads over per-clip feature vectors: a small MLP and a random forest.

mod forest;
mod model;

pub use forest::{
    bootstrap_sample, default_features_per_split, fit_forest, fit_tree, gini, Forest, ForestParams, Node, Tree,
};
pub use model::{
    audio_accuracy, audio_matrix, train_audio_mlp, train_audio_model, train_random_forest, AudioBranch, AudioModel,
    Standardizer, FOREST_CHECKPOINT_KIND, MLP_CHECKPOINT_KIND,
};

use crate::data::Clip;
use crate::error::Result;
use crate::scores::ScoreVector;

/// Class scores of `clip` under `model`; the clip must carry audio.
pub fn predict_audio(model: &AudioModel, clip: &Clip) -> Result<ScoreVector> {
    model.predict(clip)
}
