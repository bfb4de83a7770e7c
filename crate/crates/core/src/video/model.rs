use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::pooling::{pool_average, pool_weighted, pool_weighted_backward, predict_score_mean};
use super::select::{select_frames, SelectedClip};
use crate::config::{HeadKind, KeyValues, TrainConfig};
use crate::data::{Clip, EmotionClass};
use crate::error::{Error, Result};
use crate::nn::{
    batch_cross_entropy, softmax, Checkpoint, Layer, Linear, Lstm, Mode, Objective, Optimizer, ParamTensor,
};
use crate::rng::{rng_from_seed, KernelRng};
use crate::scores::ScoreVector;

pub const VIDEO_CHECKPOINT_KIND: &str = "video";

/// Trainable parameters of a video head; which groups exist follows the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VideoHead {
    ScoreMean,
    AvgPool { classifier: Linear },
    WeightedAvgPool { regressor: Linear, classifier: Linear },
    Lstm { lstm: Lstm, output: Linear },
}

impl VideoHead {
    pub fn new(kind: HeadKind, feature_dim: usize, classes: usize, lstm_hidden: usize, rng: &mut KernelRng) -> Self {
        match kind {
            HeadKind::ScoreMean => VideoHead::ScoreMean,
            HeadKind::AvgPool => VideoHead::AvgPool {
                classifier: Linear::new("classifier", feature_dim, classes, rng),
            },
            HeadKind::WeightedAvgPool => VideoHead::WeightedAvgPool {
                regressor: Linear::new("regressor", 2, 1, rng),
                classifier: Linear::new("classifier", feature_dim, classes, rng),
            },
            HeadKind::Lstm => VideoHead::Lstm {
                lstm: Lstm::new("lstm", feature_dim, lstm_hidden, rng),
                output: Linear::new("output", lstm_hidden, classes, rng),
            },
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            VideoHead::ScoreMean => HeadKind::ScoreMean,
            VideoHead::AvgPool { .. } => HeadKind::AvgPool,
            VideoHead::WeightedAvgPool { .. } => HeadKind::WeightedAvgPool,
            VideoHead::Lstm { .. } => HeadKind::Lstm,
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        match self {
            VideoHead::ScoreMean => Vec::new(),
            VideoHead::AvgPool { classifier } => classifier.params(),
            VideoHead::WeightedAvgPool { regressor, classifier } => {
                let mut ps = regressor.params();
                ps.extend(classifier.params());
                ps
            }
            VideoHead::Lstm { lstm, output } => {
                let mut ps = lstm.params();
                ps.extend(output.params());
                ps
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        match self {
            VideoHead::ScoreMean => Vec::new(),
            VideoHead::AvgPool { classifier } => classifier.params_mut(),
            VideoHead::WeightedAvgPool { regressor, classifier } => {
                let mut ps = regressor.params_mut();
                ps.extend(classifier.params_mut());
                ps
            }
            VideoHead::Lstm { lstm, output } => {
                let mut ps = lstm.params_mut();
                ps.extend(output.params_mut());
                ps
            }
        }
    }

    /// Logits for one selected clip; no caching.
    pub fn logits(&self, sel: &SelectedClip) -> Result<Array1<f64>> {
        let row = |v: Array1<f64>| v.insert_axis(Axis(0));
        let out = match self {
            VideoHead::ScoreMean => return Err(Error::contract("score-mean head has no logits")),
            VideoHead::AvgPool { classifier } => classifier.apply(&row(pool_average(sel)))?,
            VideoHead::WeightedAvgPool { regressor, classifier } => {
                classifier.apply(&row(pool_weighted(sel, regressor)?.0))?
            }
            VideoHead::Lstm { lstm, output } => output.apply(&row(lstm.run(&sel.features)?.h))?,
        };
        Ok(out.row(0).to_owned())
    }

    /// Mean cross-entropy over a batch; with `backward`, gradients are
    /// accumulated into the parameters.
    pub fn batch_loss(&mut self, batch: &[(&SelectedClip, EmotionClass)], backward: bool) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::contract("empty training batch"));
        }
        let labels: Vec<EmotionClass> = batch.iter().map(|b| b.1).collect();
        // Scratch rng for the `Layer` interface; none of these layers draw from it.
        let mut rng = rng_from_seed(0);
        match self {
            VideoHead::ScoreMean => Err(Error::contract("score-mean head has no trainable parameters")),
            VideoHead::AvgPool { classifier } => {
                let pooled = stack(batch.iter().map(|(s, _)| pool_average(s)));
                let (logits, cache) = classifier.forward(&pooled, Mode::Train, &mut rng)?;
                let (loss, grad) = batch_cross_entropy(&logits, &labels)?;
                if backward {
                    classifier.backward(&cache, &grad)?;
                }
                Ok(loss)
            }
            VideoHead::WeightedAvgPool { regressor, classifier } => {
                let pooled: Vec<(Array1<f64>, Array1<f64>)> = batch
                    .iter()
                    .map(|(s, _)| pool_weighted(s, regressor))
                    .collect::<Result<_>>()?;
                let x = stack(pooled.iter().map(|p| p.0.clone()));
                let (logits, cache) = classifier.forward(&x, Mode::Train, &mut rng)?;
                let (loss, grad) = batch_cross_entropy(&logits, &labels)?;
                if backward {
                    let grad_pooled = classifier.backward(&cache, &grad)?;
                    for (((sel, _), (p, w)), g) in batch.iter().zip(&pooled).zip(grad_pooled.rows()) {
                        pool_weighted_backward(sel, regressor, w, p, &g.to_owned())?;
                    }
                }
                Ok(loss)
            }
            VideoHead::Lstm { lstm, output } => {
                let runs: Vec<_> = batch
                    .iter()
                    .map(|(s, _)| lstm.forward(&s.features, Mode::Train, &mut rng))
                    .collect::<Result<_>>()?;
                let last = stack(runs.iter().map(|(hs, _)| hs.row(hs.nrows() - 1).to_owned()));
                let (logits, cache) = output.forward(&last, Mode::Train, &mut rng)?;
                let (loss, grad) = batch_cross_entropy(&logits, &labels)?;
                if backward {
                    let grad_last = output.backward(&cache, &grad)?;
                    for ((hs, lcache), g) in runs.iter().zip(grad_last.rows()) {
                        let mut grad_hs = Array2::zeros(hs.raw_dim());
                        grad_hs.row_mut(hs.nrows() - 1).assign(&g);
                        lstm.backward(lcache, &grad_hs)?;
                    }
                }
                Ok(loss)
            }
        }
    }
}

fn stack(rows: impl Iterator<Item = Array1<f64>>) -> Array2<f64> {
    let rows: Vec<Array1<f64>> = rows.collect();
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    ndarray::stack(Axis(0), &views).expect("rows share one width")
}

/// A video head together with the settings it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoModel {
    pub head: VideoHead,
    pub config: TrainConfig,
    pub seed: u64,
    pub feature_dim: usize,
    pub classes: usize,
    /// Optimizer state at the end of training, kept for checkpointing.
    pub optimizer: Option<Optimizer>,
}

impl VideoModel {
    /// Freshly initialized head for `config.head`, drawn from `seed`.
    pub fn new(config: &TrainConfig, feature_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        config.check()?;
        if feature_dim == 0 || classes < 2 {
            return Err(Error::config(
                "video model needs feature_dim >= 1 and at least 2 classes",
            ));
        }
        let mut rng = rng_from_seed(seed);
        Ok(VideoModel {
            head: VideoHead::new(config.head, feature_dim, classes, config.lstm_hidden, &mut rng),
            config: config.clone(),
            seed,
            feature_dim,
            classes,
            optimizer: None,
        })
    }

    pub fn kind(&self) -> HeadKind {
        self.head.kind()
    }

    pub fn select(&self, clip: &Clip) -> Result<SelectedClip> {
        if clip.frames.is_empty() {
            return Err(Error::contract(format!("clip `{}` has no frames", clip.id)));
        }
        let width = clip.frames[0].feature.len();
        if width != self.feature_dim {
            return Err(Error::contract(format!(
                "clip `{}` has {width}-d features, model expects {}",
                clip.id, self.feature_dim
            )));
        }
        select_frames(clip, self.config.n)
    }

    /// Class scores for one clip.
    pub fn predict(&self, clip: &Clip) -> Result<ScoreVector> {
        if let VideoHead::ScoreMean = self.head {
            if clip.frames.is_empty() || clip.frames[0].scores.len() != self.classes {
                return Err(Error::contract(format!(
                    "clip `{}` does not carry {} stored scores per frame",
                    clip.id, self.classes
                )));
            }
            return predict_score_mean(clip, self.config.score_mode);
        }
        self.predict_selected(&self.select(clip)?)
    }

    pub fn predict_selected(&self, sel: &SelectedClip) -> Result<ScoreVector> {
        if sel.features.ncols() != self.feature_dim {
            return Err(Error::contract("selected features do not match the model width"));
        }
        ScoreVector::normalize(softmax(self.head.logits(sel)?.view()).to_vec())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(VIDEO_CHECKPOINT_KIND);
        ck.set_meta("head", self.kind());
        ck.set_meta("feature_dim", self.feature_dim);
        ck.set_meta("classes", self.classes);
        ck.set_meta("seed", self.seed);
        ck.set_meta("config", self.config.to_key_values().to_text());
        let params = self.head.params();
        ck.insert_params(params.iter().copied());
        if let Some(opt) = &self.optimizer {
            ck.insert_optimizer(opt, &params);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != VIDEO_CHECKPOINT_KIND {
            return Err(Error::config(format!(
                "expected a video checkpoint, found `{}`",
                ck.kind
            )));
        }
        let parse = |key: &str| -> Result<u64> {
            ck.meta(key)?
                .parse()
                .map_err(|_| Error::config(format!("checkpoint meta `{key}` is not an integer")))
        };
        let config = TrainConfig::from_key_values(&KeyValues::parse(ck.meta("config")?)?)?;
        let mut model = VideoModel::new(
            &config,
            parse("feature_dim")? as usize,
            parse("classes")? as usize,
            parse("seed")?,
        )?;
        ck.restore_params(model.head.params_mut())?;
        model.optimizer = ck.restore_optimizer(&model.head.params())?;
        Ok(model)
    }
}

/// Gradient-checkable objective: mean cross-entropy of a model over a fixed
/// batch of selected clips.
pub struct HeadObjective<'a> {
    pub head: &'a mut VideoHead,
    pub batch: Vec<(SelectedClip, EmotionClass)>,
}

impl HeadObjective<'_> {
    fn run(&mut self, backward: bool) -> Result<f64> {
        let batch: Vec<(&SelectedClip, EmotionClass)> = self.batch.iter().map(|(s, l)| (s, *l)).collect();
        self.head.batch_loss(&batch, backward)
    }
}

impl Objective for HeadObjective<'_> {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.head.params_mut()
    }

    fn loss(&mut self) -> Result<f64> {
        self.run(false)
    }

    fn loss_and_grad(&mut self) -> Result<f64> {
        self.run(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FrameRecord, Split};
    use crate::nn::grad_check_objective;
    use crate::nn::gradcheck::DEFAULT_EPSILON;
    use ndarray::array;
    use rand::Rng;

    fn random_clip(len: usize, dim: usize, rng: &mut KernelRng) -> Clip {
        Clip {
            id: format!("c{len}"),
            split: Split::Train,
            label: Some(EmotionClass(0)),
            audio: None,
            frames: (0..len)
                .map(|_| FrameRecord {
                    feature: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    scores: vec![
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                    ],
                    av: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                })
                .collect(),
        }
    }

    fn config(head: HeadKind, n: usize) -> TrainConfig {
        TrainConfig {
            n,
            lstm_hidden: 3,
            ..TrainConfig::with_head(head)
        }
    }

    fn batch(seed: u64, n: usize) -> Vec<(SelectedClip, EmotionClass)> {
        let mut rng = rng_from_seed(seed);
        (0..3)
            .map(|k| {
                let len = rng.random_range(1..12);
                (
                    select_frames(&random_clip(len, 4, &mut rng), n).unwrap(),
                    EmotionClass(k),
                )
            })
            .collect()
    }

    #[test]
    fn head_kind_determines_parameters() {
        let names = |kind| {
            VideoModel::new(&config(kind, 4), 4, 3, 1)
                .unwrap()
                .head
                .params()
                .iter()
                .map(|p| p.name.clone())
                .collect::<Vec<_>>()
        };
        assert!(names(HeadKind::ScoreMean).is_empty());
        assert_eq!(names(HeadKind::AvgPool), ["classifier.weight", "classifier.bias"]);
        assert_eq!(
            names(HeadKind::WeightedAvgPool),
            [
                "regressor.weight",
                "regressor.bias",
                "classifier.weight",
                "classifier.bias"
            ]
        );
        assert_eq!(
            names(HeadKind::Lstm),
            ["lstm.w_ih", "lstm.w_hh", "lstm.bias", "output.weight", "output.bias"]
        );
    }

    #[test]
    fn joint_gradients_match_finite_differences() {
        for kind in [HeadKind::AvgPool, HeadKind::WeightedAvgPool, HeadKind::Lstm] {
            for seed in 0..10 {
                let mut model = VideoModel::new(&config(kind, 4), 4, 3, seed).unwrap();
                let mut obj = HeadObjective {
                    head: &mut model.head,
                    batch: batch(seed + 50, 4),
                };
                let err = grad_check_objective(&mut obj, DEFAULT_EPSILON).unwrap();
                assert!(err < 1e-4, "{kind} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn avg_pool_on_identical_frames_is_linear_softmax() {
        let mut rng = rng_from_seed(4);
        let mut clip = random_clip(1, 4, &mut rng);
        clip.frames = vec![clip.frames[0].clone(); 7];
        let model = VideoModel::new(&config(HeadKind::AvgPool, 4), 4, 3, 2).unwrap();
        let VideoHead::AvgPool { classifier } = &model.head else {
            unreachable!()
        };
        let r = Array2::from_shape_vec((1, 4), clip.frames[0].feature.clone()).unwrap();
        let expected = softmax(classifier.apply(&r).unwrap().row(0));
        let got = model.predict(&clip).unwrap();
        for (a, b) in got.as_slice().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_with_zero_regressor_matches_avg_pool() {
        let mut rng = rng_from_seed(5);
        let clip = random_clip(9, 4, &mut rng);
        let avg = VideoModel::new(&config(HeadKind::AvgPool, 4), 4, 3, 2).unwrap();
        let VideoHead::AvgPool { classifier } = &avg.head else {
            unreachable!()
        };
        let mut weighted = VideoModel::new(&config(HeadKind::WeightedAvgPool, 4), 4, 3, 2).unwrap();
        weighted.head = VideoHead::WeightedAvgPool {
            regressor: Linear::from_parts("regressor", array![[0.0, 0.0]], Some(array![[0.3]])),
            classifier: classifier.clone(),
        };
        let a = avg.predict(&clip).unwrap();
        let w = weighted.predict(&clip).unwrap();
        for (x, y) in a.as_slice().iter().zip(w.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_on_single_frame_clip_unrolls_n_identical_steps() {
        let mut rng = rng_from_seed(6);
        let clip = random_clip(1, 4, &mut rng);
        let model = VideoModel::new(&config(HeadKind::Lstm, 16), 4, 3, 9).unwrap();
        let VideoHead::Lstm { lstm, output } = &model.head else {
            unreachable!()
        };
        let x = ndarray::ArrayView1::from(&clip.frames[0].feature[..]);
        let mut state = crate::nn::LstmState::zeros(3);
        for _ in 0..16 {
            state = crate::nn::lstm_step(&lstm.params, &state, x).unwrap();
        }
        let logits = output.apply(&state.h.insert_axis(Axis(0))).unwrap();
        let expected = softmax(logits.row(0));
        let got = model.predict(&clip).unwrap();
        for (a, b) in got.as_slice().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn every_head_returns_a_valid_score_vector() {
        let mut rng = rng_from_seed(7);
        for kind in [
            HeadKind::ScoreMean,
            HeadKind::AvgPool,
            HeadKind::WeightedAvgPool,
            HeadKind::Lstm,
        ] {
            let model = VideoModel::new(&config(kind, 5), 4, 3, 1).unwrap();
            for len in 1..10 {
                let s = model.predict(&random_clip(len, 4, &mut rng)).unwrap();
                assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let mut rng = rng_from_seed(8);
        let model = VideoModel::new(&config(HeadKind::AvgPool, 4), 5, 3, 1).unwrap();
        assert!(matches!(
            model.predict(&random_clip(3, 4, &mut rng)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        for kind in [
            HeadKind::ScoreMean,
            HeadKind::AvgPool,
            HeadKind::WeightedAvgPool,
            HeadKind::Lstm,
        ] {
            let model = VideoModel::new(&config(kind, 4), 4, 3, 11).unwrap();
            let back = VideoModel::from_checkpoint(&Checkpoint::from_bytes(&model.to_checkpoint().to_bytes()).unwrap())
                .unwrap();
            assert_eq!(back, model);
        }
    }
}
