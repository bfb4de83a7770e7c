//! Temporal pooling of selected frames and the score-averaging baseline.

use ndarray::{Array1, Array2, Axis};

use super::select::SelectedClip;
use crate::config::ScoreMode;
use crate::data::Clip;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softmax, Layer, Linear};
use crate::scores::ScoreVector;

/// Column mean of the selected feature rows.
pub fn pool_average(sel: &SelectedClip) -> Array1<f64> {
    sel.features.mean_axis(Axis(0)).expect("selection has at least one row")
}

/// Per-frame weights `sigmoid(a . av_i + b)` from a `2 -> 1` regressor.
pub fn frame_weights(sel: &SelectedClip, regressor: &Linear) -> Result<Array1<f64>> {
    if regressor.inputs() != 2 || regressor.outputs() != 1 {
        return Err(Error::contract("weight regressor must map 2 -> 1"));
    }
    Ok(regressor.apply(&sel.av)?.column(0).mapv(sigmoid))
}

/// Normalized weighted average `sum(w_i f_i) / sum(w_i)`; also returns the weights.
pub fn pool_weighted(sel: &SelectedClip, regressor: &Linear) -> Result<(Array1<f64>, Array1<f64>)> {
    let w = frame_weights(sel, regressor)?;
    let pooled = w.dot(&sel.features) / w.sum();
    Ok((pooled, w))
}

/// Backpropagates a gradient on the weighted-pooled vector into the
/// regressor parameters (features are frozen inputs).
///
/// With `p = sum(w f) / S`, `dp/dw_i = (f_i - p) / S` and
/// `dw_i/dz_i = w_i (1 - w_i)`.
pub fn pool_weighted_backward(
    sel: &SelectedClip,
    regressor: &mut Linear,
    weights: &Array1<f64>,
    pooled: &Array1<f64>,
    grad_pooled: &Array1<f64>,
) -> Result<()> {
    let total = weights.sum();
    let centered = &sel.features - &pooled.view().insert_axis(Axis(0));
    let grad_w = centered.dot(grad_pooled) / total;
    let grad_z = &grad_w * &weights.mapv(|w| w * (1.0 - w));
    regressor.backward(&sel.av, &grad_z.insert_axis(Axis(1)))?;
    Ok(())
}

/// Clip prediction from stored per-frame scores: per-class mean, then
/// renormalized by its sum (probabilities) or passed through softmax (logits).
pub fn predict_score_mean(clip: &Clip, mode: ScoreMode) -> Result<ScoreVector> {
    let c = clip.frames[0].scores.len();
    let mut rows = Array2::zeros((clip.len(), c));
    for (i, fr) in clip.frames.iter().enumerate() {
        if fr.scores.len() != c {
            return Err(Error::contract(format!("clip `{}` mixes score widths", clip.id)));
        }
        rows.row_mut(i).assign(&ndarray::ArrayView1::from(&fr.scores[..]));
    }
    let mean = rows.mean_axis(Axis(0)).expect("clip has frames");
    match mode {
        ScoreMode::Logits => ScoreVector::normalize(softmax(mean.view()).to_vec()),
        ScoreMode::Probabilities => ScoreVector::normalize(mean.to_vec()).map_err(|_| {
            Error::contract(format!(
                "clip `{}` has negative or all-zero stored scores; use score_mode=logits",
                clip.id
            ))
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FrameRecord, Split};
    use crate::nn::check_gradient;
    use crate::rng::rng_from_seed;
    use ndarray::array;
    use rand::Rng;

    fn selected(features: Array2<f64>, av: Array2<f64>) -> SelectedClip {
        let n = features.nrows();
        SelectedClip {
            features,
            av,
            source_indices: (0..n).collect(),
        }
    }

    fn regressor(a: [f64; 2], b: f64) -> Linear {
        Linear::from_parts("regressor", array![[a[0], a[1]]], Some(array![[b]]))
    }

    #[test]
    fn average_of_identical_rows() {
        let r = array![1.0, -2.0, 0.5];
        let f = Array2::from_shape_fn((4, 3), |(_, j)| r[j]);
        assert_eq!(pool_average(&selected(f, Array2::zeros((4, 2)))), r);
    }

    #[test]
    fn opposite_rows_cancel() {
        let f = array![[1.0, 0.0], [-1.0, 0.0]];
        assert_eq!(pool_average(&selected(f, Array2::zeros((2, 2)))), array![0.0, 0.0]);
    }

    #[test]
    fn average_matches_direct_mean() {
        let mut rng = rng_from_seed(8);
        let f = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-5.0..5.0));
        let oracle: Vec<f64> = (0..3).map(|j| (0..4).map(|i| f[[i, j]]).sum::<f64>() / 4.0).collect();
        let got = pool_average(&selected(f, Array2::zeros((4, 2))));
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_regressor_reduces_to_average() {
        let mut rng = rng_from_seed(2);
        let sel = selected(
            Array2::from_shape_simple_fn((6, 5), || rng.random_range(-3.0..3.0)),
            Array2::from_shape_simple_fn((6, 2), || rng.random_range(-1.0..1.0)),
        );
        let (p, w) = pool_weighted(&sel, &regressor([0.0, 0.0], 0.7)).unwrap();
        assert!(w.iter().all(|&x| x == w[0]));
        let avg = pool_average(&sel);
        for (a, b) in p.iter().zip(&avg) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_weights_select_one_frame() {
        let f = array![[1.0, 2.0], [10.0, -4.0], [7.0, 7.0]];
        let av = array![[-1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]];
        let (p, w) = pool_weighted(&selected(f, av), &regressor([40.0, 0.0], 0.0)).unwrap();
        assert!(w[1] > 1.0 - 1e-12 && w[0] < 1e-12);
        assert!((p[0] - 10.0).abs() < 1e-6 && (p[1] + 4.0).abs() < 1e-6);
    }

    #[test]
    fn regressor_gradient_matches_finite_differences() {
        for seed in 0..10 {
            let mut rng = rng_from_seed(seed);
            let sel = selected(
                Array2::from_shape_simple_fn((5, 3), || rng.random_range(-2.0..2.0)),
                Array2::from_shape_simple_fn((5, 2), || rng.random_range(-1.0..1.0)),
            );
            let g = Array1::from_shape_simple_fn(3, || rng.random_range(-1.0..1.0));
            let theta = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
            ];
            let mut reg = regressor([theta[0], theta[1]], theta[2]);
            reg.zero_grad();
            let (p, w) = pool_weighted(&sel, &reg).unwrap();
            pool_weighted_backward(&sel, &mut reg, &w, &p, &g).unwrap();
            let analytic = [
                reg.weight.grad[[0, 0]],
                reg.weight.grad[[0, 1]],
                reg.bias.as_ref().unwrap().grad[[0, 0]],
            ];
            let err = check_gradient(
                &theta,
                &analytic,
                |t| pool_weighted(&sel, &regressor([t[0], t[1]], t[2])).unwrap().0.dot(&g),
                1e-5,
            );
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    fn clip(scores: Vec<Vec<f64>>) -> Clip {
        Clip {
            id: "c".into(),
            split: Split::Val,
            label: None,
            audio: None,
            frames: scores
                .into_iter()
                .map(|s| FrameRecord {
                    feature: vec![0.0],
                    scores: s,
                    av: [0.0; 2],
                })
                .collect(),
        }
    }

    #[test]
    fn score_mean_single_frame_is_its_normalized_scores() {
        let s = predict_score_mean(&clip(vec![vec![0.2, 0.2, 0.6]]), ScoreMode::Probabilities).unwrap();
        assert_eq!(s.as_slice(), &[0.2, 0.2, 0.6]);
        let s = predict_score_mean(&clip(vec![vec![1.0, 1.0, 2.0]]), ScoreMode::Probabilities).unwrap();
        assert_eq!(s.as_slice(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn score_mean_tie_breaks_to_lower_class() {
        let s = predict_score_mean(
            &clip(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]),
            ScoreMode::Probabilities,
        )
        .unwrap();
        assert_eq!(s.as_slice(), &[0.5, 0.5, 0.0]);
        assert_eq!(s.argmax().index(), 0);
    }

    #[test]
    fn score_mean_idempotent_over_identical_frames() {
        let one = predict_score_mean(&clip(vec![vec![-1.0, 2.0, 0.5]]), ScoreMode::Logits).unwrap();
        let many = predict_score_mean(&clip(vec![vec![-1.0, 2.0, 0.5]; 5]), ScoreMode::Logits).unwrap();
        for (a, b) in one.as_slice().iter().zip(many.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_scores_need_logit_mode() {
        assert!(predict_score_mean(&clip(vec![vec![-1.0, 2.0]]), ScoreMode::Probabilities).is_err());
    }
}
