//! Fuse video and audio scores with fixed weights, then learn the weights
//! on the validation split.

use smallclip::audio::train_audio_mlp;
use smallclip::config::{AudioConfig, HeadKind, TrainConfig};
use smallclip::data::{generate_synthetic, Split, SynthConfig};
use smallclip::eval::{evaluate, split_labels};
use smallclip::fusion::{default_grid_step, ensemble_table, fuse_tables, learn_fusion_weights, FusionWeights};
use smallclip::video::train_video_model;

fn main() -> smallclip::error::Result<()> {
    let mut synth = SynthConfig::uniform(7, 20, 10, 0);
    synth.clip_noise = 1.0;
    synth.noise = 0.5;
    synth.audio_noise = 3.0;
    let ds = generate_synthetic(&synth, 2)?.dataset;
    let labels = split_labels(&ds, Split::Val);

    let (video, _) = train_video_model(&ds, &TrainConfig::with_head(HeadKind::AvgPool), 1)?;
    let (audio, _) = train_audio_mlp(&ds, &AudioConfig::default(), 1, None)?;
    let v = ensemble_table(&[video], ds.split(Split::Val), 1)?;
    let a = ensemble_table(&[audio], ds.split(Split::Val), 1)?;
    let tables = [&v, &a];

    let learned = learn_fusion_weights(&tables, &labels, default_grid_step(2))?;
    for (name, w) in [
        ("video only", FusionWeights::new(vec![1.0, 0.0])?),
        ("audio only", FusionWeights::new(vec![0.0, 1.0])?),
        ("0.65/0.35", "0.65,0.35".parse()?),
        ("learned", learned.clone()),
    ] {
        let report = evaluate(&fuse_tables(&tables, &w)?, &labels, None)?;
        println!("{name:<11} w=[{w}]  val {:.3}", report.accuracy);
    }
    Ok(())
}
