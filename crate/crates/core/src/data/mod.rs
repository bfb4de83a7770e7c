//! Clips, datasets and their on-disk formats.

mod distribution;
mod manifest;
mod synth;
mod types;
mod validate;

pub use distribution::{ClassDistribution, AFEW_TEST_COUNTS, AFEW_TRAIN_COUNTS, AFEW_VAL_COUNTS};
pub use manifest::{load_dataset, manifest_bytes, read_manifest, write_manifest};
pub use synth::{generate_synthetic, SynthConfig, SynthRecipe, SyntheticDataset};
pub use types::{
    Clip, Dataset, Dims, EmotionClass, FrameRecord, Split, DEFAULT_AUDIO_DIM, DEFAULT_CLASSES, DEFAULT_FEATURE_DIM,
    EMOTION_NAMES,
};
pub use validate::{validate_dataset, ValidationReport};
