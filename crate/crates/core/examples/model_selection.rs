//! Seed spread of one configuration, k-fold cross-validation, and accuracy
//! reweighted to a target class distribution.

use smallclip::config::{HeadKind, TrainConfig};
use smallclip::data::{generate_synthetic, ClassDistribution, Split, SynthConfig};
use smallclip::eval::{cross_validate, evaluate, repeated_runs, split_labels};
use smallclip::fusion::ensemble_table;
use smallclip::video::train_video_model;

fn main() -> smallclip::error::Result<()> {
    let mut synth = SynthConfig::uniform(7, 20, 10, 0);
    synth.clip_noise = 1.0;
    synth.noise = 0.5;
    let ds = generate_synthetic(&synth, 1)?.dataset;
    let config = TrainConfig::with_head(HeadKind::AvgPool);
    let labels = split_labels(&ds, Split::Val);

    let seeds: Vec<u64> = (0..8).collect();
    let stats = repeated_runs(&seeds, 4, |seed| {
        let (m, _) = train_video_model(&ds, &config, seed)?;
        Ok(evaluate(&ensemble_table(&[m], ds.split(Split::Val), 1)?, &labels, None)?.accuracy)
    })?;
    println!("8 seeds: mean {:.3} std {:.3}", stats.mean, stats.std);

    let cv = cross_validate(&ds, 5, 0, 4, |fold, seed| {
        let (m, _) = train_video_model(fold, &config, seed)?;
        ensemble_table(&[m], fold.split(Split::Val), 1)
    })?;
    println!(
        "5-fold: per fold {:.3?}, pooled {:.3}",
        cv.per_fold.accuracies, cv.pooled.accuracy
    );

    let (m, _) = train_video_model(&ds, &config, 0)?;
    let report = evaluate(
        &ensemble_table(&[m], ds.split(Split::Val), 1)?,
        &labels,
        Some(&ClassDistribution::afew_test()),
    )?;
    println!("{report}");
    Ok(())
}
