//! Average several copies of one head that differ only in their seed.

use smallclip::config::{HeadKind, TrainConfig};
use smallclip::data::{generate_synthetic, Split, SynthConfig};
use smallclip::eval::{evaluate, split_labels};
use smallclip::fusion::{ensemble_table, train_video_ensemble};

fn main() -> smallclip::error::Result<()> {
    let mut synth = SynthConfig::uniform(7, 20, 10, 0).with_centroid_seed(100);
    synth.clip_noise = 2.0;
    synth.noise = 1.0;
    let ds = generate_synthetic(&synth, 1)?.dataset;
    let labels = split_labels(&ds, Split::Val);

    let members = train_video_ensemble(&ds, &TrainConfig::with_head(HeadKind::AvgPool), 1000, 8, 4)?;
    for (i, m) in members.iter().enumerate().take(4) {
        let acc = evaluate(
            &ensemble_table(std::slice::from_ref(m), ds.split(Split::Val), 1)?,
            &labels,
            None,
        )?
        .accuracy;
        println!("member {i} (seed {}) val {acc:.3}", m.seed);
    }
    for k in [1, 2, 4, 8] {
        let acc = evaluate(&ensemble_table(&members[..k], ds.split(Split::Val), 4)?, &labels, None)?.accuracy;
        println!("ensemble of {k}: val {acc:.3}");
    }
    Ok(())
}
