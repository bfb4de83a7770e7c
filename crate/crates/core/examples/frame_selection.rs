//! Pick the highest-scoring frame from each of `n` equal chunks, for a clip
//! longer and a clip shorter than `n`.

use smallclip::data::{generate_synthetic, SynthConfig};
use smallclip::video::{chunk_bounds, frame_score, select_frames};

fn main() -> smallclip::error::Result<()> {
    let mut config = SynthConfig::uniform(3, 2, 0, 0);
    config.min_len = 5;
    config.max_len = 30;
    let ds = generate_synthetic(&config, 8)?.dataset;

    let n = 8;
    for clip in ds.clips().iter().take(3) {
        let sel = select_frames(clip, n)?;
        println!("{} ({} frames) -> {:?}", clip.id, clip.frames.len(), sel.source_indices);
        for (i, &src) in sel.source_indices.iter().enumerate().take(3) {
            let (start, end) = chunk_bounds(clip.frames.len(), n, i);
            println!(
                "  chunk {i} [{start}, {end}) picks frame {src}, score {:.3}",
                frame_score(&clip.frames[src])
            );
        }
    }
    Ok(())
}
