//! Frame selection, temporal pooling and the four video heads.

mod model;
mod pooling;
mod select;
mod train;

pub use model::{HeadObjective, VideoHead, VideoModel, VIDEO_CHECKPOINT_KIND};
pub use pooling::{frame_weights, pool_average, pool_weighted, pool_weighted_backward, predict_score_mean};
pub use select::{chunk_bounds, frame_score, select_frames, select_indices, SelectedClip};
pub use train::train_video_model;

use crate::data::Clip;
use crate::error::Result;
use crate::scores::ScoreVector;

/// Class scores of `clip` under `model`.
pub fn predict_video(model: &VideoModel, clip: &Clip) -> Result<ScoreVector> {
    model.predict(clip)
}
