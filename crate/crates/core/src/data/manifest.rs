//! JSON-Lines clip manifests: one clip object per line.
//!
//! ```text
//! {"id":"c1","split":"train","label":3,"audio":[0.1,...]|null,"frames":[{"f":[...],"s":[...],"av":[a,v]},...]}
//! ```
//!
//! Floats are written in shortest round-trip form, so `read(write(d)) == d`
//! bit for bit.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::types::{Clip, Dataset};
use crate::error::{Error, Result};

pub fn read_manifest<R: Read>(reader: R) -> Result<Dataset> {
    let mut clips = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let clip: Clip = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        clips.push(clip);
    }
    if clips.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "manifest contains no clips".into(),
        });
    }
    Dataset::new(clips)
}

/// Loads and validates a manifest file.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest(file)
}

pub fn write_manifest<W: Write>(ds: &Dataset, mut writer: W) -> Result<()> {
    for clip in ds.clips() {
        serde_json::to_writer(&mut writer, clip)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<manifest>", e))?;
    }
    Ok(())
}

pub fn manifest_bytes(ds: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    write_manifest(ds, &mut buf).expect("writing to memory cannot fail");
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::{EmotionClass, FrameRecord, Split};
    use proptest::prelude::*;

    fn frame(d: usize, c: usize, v: f64) -> FrameRecord {
        FrameRecord {
            feature: vec![v; d],
            scores: vec![1.0 / c as f64; c],
            av: [0.1, -0.2],
        }
    }

    fn clip(id: &str, l: usize, d: usize, c: usize) -> Clip {
        Clip {
            id: id.into(),
            split: Split::Train,
            label: Some(EmotionClass(1)),
            audio: None,
            frames: (0..l).map(|i| frame(d, c, i as f64)).collect(),
        }
    }

    #[test]
    fn loads_two_clips_and_infers_dims() {
        let ds = Dataset::new(vec![clip("a", 3, 4, 7), clip("b", 3, 4, 7)]).unwrap();
        let text = manifest_bytes(&ds);
        let back = read_manifest(&text[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.dims().feature_dim, 4);
        assert_eq!(back.dims().classes, 7);
        assert_eq!(back.dims().audio_dim, None);
    }

    #[test]
    fn wrong_score_count_names_clip() {
        let mut bad = clip("bad-clip", 2, 4, 7);
        bad.frames[1].scores = vec![0.2, 0.3, 0.5];
        let ds_text = format!(
            "{}\n{}\n",
            serde_json::to_string(&clip("ok", 2, 4, 7)).unwrap(),
            serde_json::to_string(&bad).unwrap()
        );
        match read_manifest(ds_text.as_bytes()) {
            Err(Error::Validation { clip, .. }) => assert_eq!(clip, "bad-clip"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = format!("{}\n{{not json\n", serde_json::to_string(&clip("ok", 1, 2, 7)).unwrap());
        assert!(matches!(
            read_manifest(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_clip_rejected() {
        let text = r#"{"id":"e","split":"val","label":null,"audio":null,"frames":[]}"#;
        assert!(matches!(read_manifest(text.as_bytes()), Err(Error::Validation { .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Dataset::new(vec![clip("a", 1, 2, 7), clip("a", 1, 2, 7)]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            values in prop::collection::vec(-1e300f64..1e300, 6),
            tiny in prop::collection::vec(-1e-300f64..1e-300, 6),
            audio in prop::option::of(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3)),
        ) {
            let frames = vec![
                FrameRecord { feature: values[..3].to_vec(), scores: values[3..].to_vec(), av: [tiny[0], tiny[1]] },
                FrameRecord { feature: tiny[..3].to_vec(), scores: tiny[3..].to_vec(), av: [values[0], values[5]] },
            ];
            let c = Clip { id: "x".into(), split: Split::Test, label: None, audio, frames };
            let ds = Dataset::new(vec![c]).unwrap();
            let back = read_manifest(&manifest_bytes(&ds)[..]).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
