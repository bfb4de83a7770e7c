//! Train the three video heads on the same data and compare validation
//! accuracy per epoch.

use smallclip::config::{HeadKind, TrainConfig};
use smallclip::data::{generate_synthetic, SynthConfig};
use smallclip::video::train_video_model;

fn main() -> smallclip::error::Result<()> {
    let synth = SynthConfig {
        noise: 0.5,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic(&synth, 1)?.dataset;

    for head in [HeadKind::AvgPool, HeadKind::WeightedAvgPool, HeadKind::Lstm] {
        let config = TrainConfig {
            epochs: 20,
            lstm_hidden: 32,
            ..TrainConfig::with_head(head)
        };
        let (_, log) = train_video_model(&ds, &config, 7)?;
        let curve: Vec<String> = log
            .epochs
            .iter()
            .step_by(5)
            .map(|e| format!("{:.2}", e.val_accuracy.unwrap_or(0.0)))
            .collect();
        println!(
            "{:<18} val every 5 epochs: {}  final {:.3}",
            head.as_str(),
            curve.join(" "),
            log.final_val_accuracy().unwrap_or(0.0)
        );
    }
    Ok(())
}
