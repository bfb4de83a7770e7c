//! Audio classifiers on noisy clip-level features: the MLP from scratch,
//! the MLP pretrained on an auxiliary set, and the random forest.

use smallclip::audio::{audio_accuracy, train_audio_mlp, train_random_forest};
use smallclip::config::AudioConfig;
use smallclip::data::{generate_synthetic, Split, SynthConfig};

fn noisy(train: usize, val: usize) -> SynthConfig {
    let mut c = SynthConfig::uniform(7, train, val, 0).with_centroid_seed(100);
    c.audio_noise = 3.0;
    c
}

fn main() -> smallclip::error::Result<()> {
    let ds = generate_synthetic(&noisy(20, 10), 1)?.dataset;
    // Same class centroids, disjoint clips.
    let aux = generate_synthetic(&noisy(60, 0), 77)?.dataset;
    let config = AudioConfig::default();

    let (scratch, _) = train_audio_mlp(&ds, &config, 5, None)?;
    let (pretrained, _) = train_audio_mlp(&ds, &config, 5, Some(&aux))?;
    let forest = train_random_forest(&ds, &AudioConfig::forest(), 5)?;

    for (name, model) in [("mlp", &scratch), ("mlp+pretrain", &pretrained), ("forest", &forest)] {
        let train = audio_accuracy(model, &ds, Split::Train)?.unwrap_or(0.0);
        let val = audio_accuracy(model, &ds, Split::Val)?.unwrap_or(0.0);
        println!("{name:<13} train {train:.3}  val {val:.3}");
    }
    Ok(())
}
