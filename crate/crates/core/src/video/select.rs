use ndarray::Array2;

use crate::data::{Clip, FrameRecord};
use crate::error::{Error, Result};

/// Frame confidence used for selection: the maximum stored class score.
pub fn frame_score(frame: &FrameRecord) -> f64 {
    frame.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `n` frames chosen from a clip, one per chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedClip {
    /// `n x D_f`
    pub features: Array2<f64>,
    /// `n x 2` arousal-valence rows.
    pub av: Array2<f64>,
    pub source_indices: Vec<usize>,
}

impl SelectedClip {
    pub fn n(&self) -> usize {
        self.source_indices.len()
    }
}

/// Half-open source interval `[floor(i L / n), floor((i + 1) L / n))` of chunk `i`.
pub fn chunk_bounds(len: usize, n: usize, i: usize) -> (usize, usize) {
    (i * len / n, (i + 1) * len / n)
}

/// Picks one index per chunk from per-frame scores.
///
/// A nonempty chunk yields its highest-scoring frame (ties to the earliest);
/// an empty chunk, which only happens when `L < n`, repeats index
/// `min(floor(i L / n), L - 1)`.
pub fn select_indices(scores: &[f64], n: usize) -> Result<Vec<usize>> {
    let len = scores.len();
    if n == 0 {
        return Err(Error::contract("frame selection needs n >= 1"));
    }
    if len == 0 {
        return Err(Error::contract("frame selection needs at least one frame"));
    }
    Ok((0..n)
        .map(|i| {
            let (start, end) = chunk_bounds(len, n, i);
            if start == end {
                return start.min(len - 1);
            }
            let mut best = start;
            for j in start + 1..end {
                if scores[j] > scores[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

pub fn select_frames(clip: &Clip, n: usize) -> Result<SelectedClip> {
    let scores: Vec<f64> = clip.frames.iter().map(frame_score).collect();
    let indices = select_indices(&scores, n)?;
    let dim = clip.frames[0].feature.len();
    let mut features = Array2::zeros((n, dim));
    let mut av = Array2::zeros((n, 2));
    for (row, &src) in indices.iter().enumerate() {
        let fr = &clip.frames[src];
        if fr.feature.len() != dim {
            return Err(Error::contract(format!("clip `{}` mixes feature widths", clip.id)));
        }
        features
            .row_mut(row)
            .assign(&ndarray::ArrayView1::from(&fr.feature[..]));
        av[[row, 0]] = fr.av[0];
        av[[row, 1]] = fr.av[1];
    }
    Ok(SelectedClip {
        features,
        av,
        source_indices: indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use proptest::prelude::*;

    fn clip_with_scores(scores: &[f64]) -> Clip {
        Clip {
            id: "c".into(),
            split: Split::Val,
            label: None,
            audio: None,
            frames: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| FrameRecord {
                    feature: vec![i as f64, -(i as f64)],
                    scores: vec![s, s / 2.0],
                    av: [i as f64 / 10.0, 0.0],
                })
                .collect(),
        }
    }

    #[test]
    fn frame_score_is_max_of_stored_scores() {
        let fr = |s: Vec<f64>| FrameRecord {
            feature: vec![],
            scores: s,
            av: [0.0; 2],
        };
        assert_eq!(frame_score(&fr(vec![0.1, 0.7, 0.2, 0.0, 0.0, 0.0, 0.0])), 0.7);
        assert_eq!(frame_score(&fr(vec![1.0 / 7.0; 7])), 1.0 / 7.0);
        assert_eq!(frame_score(&fr(vec![-2.0, -1.0, -3.0, -4.0, -5.0, -6.0, -7.0])), -1.0);
    }

    #[test]
    fn picks_best_frame_per_chunk() {
        assert_eq!(select_indices(&[0.2, 0.9, 0.3, 0.5], 2).unwrap(), vec![1, 3]);
    }

    #[test]
    fn equal_length_is_identity() {
        let scores = [0.9, 0.1, 0.5, 0.3, 0.7];
        assert_eq!(select_indices(&scores, 5).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn short_clip_duplicates_frames() {
        assert_eq!(select_indices(&[0.3, 0.1, 0.2], 6).unwrap(), vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn ties_go_to_earliest_frame() {
        assert_eq!(select_indices(&[0.5, 0.5, 0.5, 0.5], 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn rows_carry_selected_features_and_av() {
        let sel = select_frames(&clip_with_scores(&[0.2, 0.9, 0.3, 0.5]), 2).unwrap();
        assert_eq!(sel.features.row(0).to_vec(), vec![1.0, -1.0]);
        assert_eq!(sel.av.row(1).to_vec(), vec![0.3, 0.0]);
    }

    #[test]
    fn zero_n_rejected() {
        assert!(select_indices(&[0.1], 0).is_err());
    }

    proptest! {
        #[test]
        fn permuting_within_a_chunk_keeps_chosen_scores(
            scores in prop::collection::vec(0u8..6, 1..40),
            n in 1usize..20,
            rot in 0usize..7,
        ) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let len = scores.len();
            let before = select_indices(&scores, n).unwrap();
            let mut permuted = scores.clone();
            for i in 0..n {
                let (s, e) = chunk_bounds(len, n, i);
                if e > s {
                    let k = rot % (e - s);
                    permuted[s..e].rotate_left(k);
                }
            }
            let after = select_indices(&permuted, n).unwrap();
            let chosen = |sc: &[f64], idx: &[usize]| idx.iter().map(|&i| sc[i]).collect::<Vec<_>>();
            prop_assert_eq!(chosen(&scores, &before), chosen(&permuted, &after));
        }
    }
}
