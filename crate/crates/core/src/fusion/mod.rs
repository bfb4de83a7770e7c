//! Late fusion of score tables, seed ensembles and submission recipes.

mod ensemble;
mod fuse;
mod recipe;

pub use ensemble::{
    ensemble_predict, ensemble_table, member_seed, train_audio_ensemble, train_video_ensemble, Predictor,
};
pub use fuse::{
    default_grid_step, fuse_mean, fuse_tables, fuse_weighted, fused_accuracy, learn_fusion_weights, FusionWeights,
};
pub use recipe::{run_recipe, FusionMode, Member, MemberKind, MemberSpec, Recipe, RecipeOutcome, TrainOn};
