//! Run a named recipe end to end: member training, per-modality ensembles,
//! fusion, and the validation report.

use smallclip::data::{generate_synthetic, SynthConfig};
use smallclip::fusion::{run_recipe, Recipe};

fn main() -> smallclip::error::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "submission3".into());
    let mut recipe = Recipe::preset(&name)?;
    // Keep the example quick.
    recipe.video_overrides.set("epochs", 10);
    println!("{recipe}");

    let mut synth = SynthConfig::uniform(7, 12, 6, 4);
    synth.noise = 0.5;
    synth.missing_audio = 0.1;
    let ds = generate_synthetic(&synth, 3)?.dataset;

    let out = run_recipe(&recipe, &ds, 7, 4, None)?;
    for (spec, _) in &out.members {
        println!("member: {spec}");
    }
    println!("fusion weights: {}", out.weights);
    println!("{} clips scored", out.scores.len());
    if let Some(report) = out.report {
        println!("{report}");
    }
    Ok(())
}
