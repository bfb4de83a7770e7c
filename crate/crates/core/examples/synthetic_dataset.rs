//! Generate a small labeled dataset, write it as a JSONL manifest, read it
//! back and print the validation summary.

use smallclip::data::{generate_synthetic, manifest_bytes, read_manifest, validate_dataset, Split, SynthConfig};

fn main() -> smallclip::error::Result<()> {
    let mut config = SynthConfig::uniform(7, 12, 6, 4);
    config.missing_audio = 0.1;
    let synth = generate_synthetic(&config, 42)?;

    let bytes = manifest_bytes(&synth.dataset);
    let reloaded = read_manifest(bytes.as_slice())?;
    assert_eq!(reloaded, synth.dataset);

    let report = validate_dataset(&reloaded);
    println!("{} clips, {} bytes of manifest", report.clip_count, bytes.len());
    println!("dims: {:?}", report.dims);
    for split in Split::ALL {
        println!("{split:<5} counts {:?}", reloaded.distribution(split).counts());
    }
    println!("missing audio: {:.1}%", 100.0 * report.missing_audio_fraction());
    Ok(())
}
