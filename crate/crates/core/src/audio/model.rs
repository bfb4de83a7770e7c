use log::{debug, info};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

use super::forest::{default_features_per_split, fit_forest, Forest, ForestParams};
use crate::config::{AudioConfig, AudioKind, KeyValues};
use crate::data::{Clip, Dataset, EmotionClass, Split};
use crate::error::{Error, Result};
use crate::nn::{batch_cross_entropy, softmax, Checkpoint, EpochRecord, Layer, MlpHead, Mode, Optimizer, TrainingLog};
use crate::rng::{derive_seed, rng_from_seed, KernelRng};
use crate::scores::ScoreVector;

pub const MLP_CHECKPOINT_KIND: &str = "audio-mlp";
pub const FOREST_CHECKPOINT_KIND: &str = "audio-forest";

/// Per-feature affine standardization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    /// Fits mean and population std per column; constant columns get scale 1.
    pub fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("non-empty design matrix");
        let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AudioBranch {
    Mlp { head: MlpHead, standardizer: Standardizer },
    Forest(Forest),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioModel {
    pub config: AudioConfig,
    pub seed: u64,
    pub audio_dim: usize,
    pub classes: usize,
    pub branch: AudioBranch,
    /// Whether the MLP was pretrained on an auxiliary dataset.
    pub pretrained: bool,
    pub optimizer: Option<Optimizer>,
}

impl AudioModel {
    pub fn kind(&self) -> AudioKind {
        match self.branch {
            AudioBranch::Mlp { .. } => AudioKind::Mlp,
            AudioBranch::Forest(_) => AudioKind::Forest,
        }
    }

    /// Class scores for a batch of raw audio rows.
    pub fn predict_rows(&self, x: &Array2<f64>) -> Result<Vec<ScoreVector>> {
        if x.ncols() != self.audio_dim {
            return Err(Error::contract(format!(
                "audio rows have {} features, model expects {}",
                x.ncols(),
                self.audio_dim
            )));
        }
        match &self.branch {
            AudioBranch::Mlp { head, standardizer } => mlp_predict(head, standardizer, x),
            AudioBranch::Forest(forest) => x
                .rows()
                .into_iter()
                .map(|r| ScoreVector::normalize(forest.predict(r.as_slice().expect("standard layout"))?))
                .collect(),
        }
    }

    pub fn predict(&self, clip: &Clip) -> Result<ScoreVector> {
        let audio = clip
            .audio
            .as_ref()
            .ok_or_else(|| Error::contract(format!("clip `{}` has no audio features", clip.id)))?;
        let x = Array2::from_shape_vec((1, audio.len()), audio.clone()).expect("one row");
        Ok(self.predict_rows(&x)?.remove(0))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = match &self.branch {
            AudioBranch::Mlp { head, standardizer } => {
                let mut ck = Checkpoint::new(MLP_CHECKPOINT_KIND);
                let params = head.params();
                ck.insert_params(params.iter().copied());
                ck.insert_buffer("bn.running_mean", &head.norm.running_mean);
                ck.insert_buffer("bn.running_var", &head.norm.running_var);
                ck.insert_buffer("input.mean", &standardizer.mean.clone().insert_axis(Axis(0)));
                ck.insert_buffer("input.scale", &standardizer.scale.clone().insert_axis(Axis(0)));
                if let Some(opt) = &self.optimizer {
                    ck.insert_optimizer(opt, &params);
                }
                ck
            }
            AudioBranch::Forest(forest) => {
                let mut ck = Checkpoint::new(FOREST_CHECKPOINT_KIND);
                ck.structure = Some(serde_json::to_value(forest)?);
                ck
            }
        };
        ck.set_meta("audio_dim", self.audio_dim);
        ck.set_meta("classes", self.classes);
        ck.set_meta("seed", self.seed);
        ck.set_meta("pretrained", self.pretrained);
        ck.set_meta("config", self.config.to_key_values().to_text());
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let num = |key: &str| -> Result<u64> {
            ck.meta(key)?
                .parse()
                .map_err(|_| Error::config(format!("checkpoint meta `{key}` is not an integer")))
        };
        let config = AudioConfig::from_key_values(&KeyValues::parse(ck.meta("config")?)?)?;
        let (audio_dim, classes, seed) = (num("audio_dim")? as usize, num("classes")? as usize, num("seed")?);
        let pretrained = ck.meta("pretrained")? == "true";
        let (branch, optimizer) = match ck.kind.as_str() {
            MLP_CHECKPOINT_KIND => {
                let mut head = new_mlp(&config, audio_dim, classes, &mut rng_from_seed(seed))?;
                ck.restore_params(head.params_mut())?;
                head.norm.running_mean = ck.buffer("bn.running_mean")?;
                head.norm.running_var = ck.buffer("bn.running_var")?;
                let standardizer = Standardizer {
                    mean: ck.buffer("input.mean")?.row(0).to_owned(),
                    scale: ck.buffer("input.scale")?.row(0).to_owned(),
                };
                let optimizer = ck.restore_optimizer(&head.params())?;
                (AudioBranch::Mlp { head, standardizer }, optimizer)
            }
            FOREST_CHECKPOINT_KIND => {
                let structure = ck
                    .structure
                    .clone()
                    .ok_or_else(|| Error::config("forest checkpoint has no trees"))?;
                (AudioBranch::Forest(serde_json::from_value(structure)?), None)
            }
            other => return Err(Error::config(format!("expected an audio checkpoint, found `{other}`"))),
        };
        Ok(AudioModel {
            config,
            seed,
            audio_dim,
            classes,
            branch,
            pretrained,
            optimizer,
        })
    }
}

fn mlp_predict(head: &MlpHead, standardizer: &Standardizer, x: &Array2<f64>) -> Result<Vec<ScoreVector>> {
    // Eval mode touches neither running statistics nor the rng.
    let (logits, _) = head
        .clone()
        .forward(&standardizer.apply(x), Mode::Eval, &mut rng_from_seed(0))?;
    logits
        .rows()
        .into_iter()
        .map(|r| ScoreVector::normalize(softmax(r).to_vec()))
        .collect()
}

fn new_mlp(config: &AudioConfig, audio_dim: usize, classes: usize, rng: &mut KernelRng) -> Result<MlpHead> {
    MlpHead::new("mlp", audio_dim, config.hidden, classes, config.dropout, rng)
}

/// Design matrix and labels of labeled, audio-bearing clips.
pub fn audio_matrix<'a>(
    clips: impl Iterator<Item = (&'a Clip, EmotionClass)>,
) -> Result<(Array2<f64>, Vec<EmotionClass>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (clip, label) in clips {
        let Some(a) = &clip.audio else { continue };
        if *width.get_or_insert(a.len()) != a.len() {
            return Err(Error::contract(format!(
                "clip `{}` has a different audio width",
                clip.id
            )));
        }
        rows.extend_from_slice(a);
        labels.push(label);
    }
    let x = Array2::from_shape_vec((labels.len(), width.unwrap_or(0)), rows).expect("rows share one width");
    Ok((x, labels))
}

fn accuracy(model: &AudioModel, x: &Array2<f64>, y: &[EmotionClass]) -> Result<Option<f64>> {
    if y.is_empty() {
        return Ok(None);
    }
    score_accuracy(&model.predict_rows(x)?, y)
}

fn score_accuracy(preds: &[ScoreVector], y: &[EmotionClass]) -> Result<Option<f64>> {
    if y.is_empty() {
        return Ok(None);
    }
    let correct = preds.iter().zip(y).filter(|(p, l)| p.argmax() == **l).count();
    Ok(Some(correct as f64 / y.len() as f64))
}

/// Shuffled mini-batches of `0..n`; a trailing batch of one row is merged
/// into the previous batch because batch-norm needs two rows.
fn batches(n: usize, size: usize, rng: &mut KernelRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

/// Runs `epochs` passes of mini-batch training; `on_epoch` sees the head after each.
#[allow(clippy::too_many_arguments)]
fn fit_mlp(
    head: &mut MlpHead,
    optimizer: &mut Optimizer,
    x: &Array2<f64>,
    y: &[EmotionClass],
    epochs: usize,
    batch_size: usize,
    rng: &mut KernelRng,
    mut on_epoch: impl FnMut(usize, f64, &MlpHead) -> Result<()>,
) -> Result<()> {
    for epoch in 0..epochs {
        let mut total = 0.0;
        for batch in batches(y.len(), batch_size, rng) {
            let xb = x.select(Axis(0), &batch);
            let yb: Vec<EmotionClass> = batch.iter().map(|&i| y[i]).collect();
            let step = |head: &mut MlpHead, rng: &mut KernelRng| -> Result<f64> {
                let (logits, cache) = head.forward(&xb, Mode::Train, rng)?;
                let (loss, grad) = batch_cross_entropy(&logits, &yb)?;
                head.backward(&cache, &grad)?;
                Ok(loss)
            };
            let loss = step(head, rng).map_err(|e| Error::training(format!("epoch {epoch}: {e}")))?;
            if !loss.is_finite() {
                return Err(Error::training(format!("non-finite loss at epoch {epoch}")));
            }
            optimizer
                .step(head.params_mut())
                .map_err(|e| Error::training(format!("epoch {epoch}: {e}")))?;
            total += loss * batch.len() as f64;
        }
        on_epoch(epoch, total / y.len() as f64, head)?;
    }
    Ok(())
}

/// Trains the audio MLP on the labeled, audio-bearing train clips of `ds`.
///
/// With `pretrain`, the network (and the input standardization) is first
/// fit on every labeled audio clip of that dataset for `pretrain_epochs`,
/// then fine-tuned on `ds` with a fresh optimizer at `lr * finetune_ratio`.
pub fn train_audio_mlp(
    ds: &Dataset,
    config: &AudioConfig,
    seed: u64,
    pretrain: Option<&Dataset>,
) -> Result<(AudioModel, TrainingLog)> {
    config.check()?;
    let (x, y) = audio_matrix(ds.labeled(Split::Train))?;
    if y.is_empty() {
        return Err(Error::training("no labeled clips with audio in the train split"));
    }
    let (xv, yv) = audio_matrix(ds.labeled(Split::Val))?;
    let classes = ds.classes();
    let audio_dim = x.ncols();
    let mut init_rng = rng_from_seed(seed);
    let mut head = new_mlp(config, audio_dim, classes, &mut init_rng)?;
    let mut rng = rng_from_seed(derive_seed(seed, 1));

    let aux = match pretrain {
        Some(aux_ds) => {
            let (xa, ya) = audio_matrix(Split::ALL.iter().flat_map(|&s| aux_ds.labeled(s)))?;
            if ya.is_empty() {
                return Err(Error::training("pretraining dataset has no labeled audio clips"));
            }
            if xa.ncols() != audio_dim || aux_ds.classes() != classes {
                return Err(Error::contract(
                    "pretraining dataset dimensions differ from the target dataset",
                ));
            }
            Some((xa, ya))
        }
        None => None,
    };
    let standardizer = Standardizer::fit(aux.as_ref().map_or(&x, |(xa, _)| xa));

    let mut lr = config.lr;
    if let Some((xa, ya)) = &aux {
        info!(
            "pretraining audio MLP on {} clips for {} epochs",
            ya.len(),
            config.pretrain_epochs
        );
        let mut opt = Optimizer::new(config.optimizer, config.lr)?;
        fit_mlp(
            &mut head,
            &mut opt,
            &standardizer.apply(xa),
            ya,
            config.pretrain_epochs,
            config.batch_size,
            &mut rng,
            |epoch, loss, _| {
                debug!("pretrain epoch {epoch}: loss {loss:.5}");
                Ok(())
            },
        )?;
        lr *= config.finetune_ratio;
    }

    let mut optimizer = Optimizer::new(config.optimizer, lr)?;
    let mut log = TrainingLog::default();
    info!(
        "training audio MLP on {} clips for {} epochs (seed {seed})",
        y.len(),
        config.epochs
    );
    fit_mlp(
        &mut head,
        &mut optimizer,
        &standardizer.apply(&x),
        &y,
        config.epochs,
        config.batch_size,
        &mut rng,
        |epoch, train_loss, head| {
            let val_accuracy = if yv.is_empty() {
                None
            } else {
                score_accuracy(&mlp_predict(head, &standardizer, &xv)?, &yv)?
            };
            debug!("epoch {epoch}: loss {train_loss:.5} val {val_accuracy:?}");
            log.epochs.push(EpochRecord {
                epoch,
                train_loss,
                val_accuracy,
            });
            Ok(())
        },
    )?;
    let model = AudioModel {
        config: config.clone(),
        seed,
        audio_dim,
        classes,
        branch: AudioBranch::Mlp { head, standardizer },
        pretrained: aux.is_some(),
        optimizer: Some(optimizer),
    };
    Ok((model, log))
}

/// Fits a random forest on the labeled, audio-bearing train clips of `ds`.
pub fn train_random_forest(ds: &Dataset, config: &AudioConfig, seed: u64) -> Result<AudioModel> {
    config.check()?;
    let (x, y) = audio_matrix(ds.labeled(Split::Train))?;
    if y.len() < 2 {
        return Err(Error::training(
            "random forest needs at least 2 labeled training clips with audio",
        ));
    }
    let audio_dim = x.ncols();
    let params = ForestParams {
        trees: config.trees,
        max_depth: config.max_depth,
        features_per_split: config
            .features_per_split
            .unwrap_or_else(|| default_features_per_split(audio_dim)),
    };
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let labels: Vec<usize> = y.iter().map(|c| c.index()).collect();
    info!(
        "fitting {} trees on {} clips (m = {})",
        params.trees,
        rows.len(),
        params.features_per_split
    );
    let forest = fit_forest(&rows, &labels, ds.classes(), params, seed)?;
    Ok(AudioModel {
        config: config.clone(),
        seed,
        audio_dim,
        classes: ds.classes(),
        branch: AudioBranch::Forest(forest),
        pretrained: false,
        optimizer: None,
    })
}

/// Trains whichever audio model `config.kind` names.
pub fn train_audio_model(
    ds: &Dataset,
    config: &AudioConfig,
    seed: u64,
    pretrain: Option<&Dataset>,
) -> Result<(AudioModel, TrainingLog)> {
    match config.kind {
        AudioKind::Mlp => train_audio_mlp(ds, config, seed, pretrain),
        AudioKind::Forest => {
            let model = train_random_forest(ds, config, seed)?;
            let (xv, yv) = audio_matrix(ds.labeled(Split::Val))?;
            let (x, y) = audio_matrix(ds.labeled(Split::Train))?;
            let log = TrainingLog {
                epochs: vec![EpochRecord {
                    epoch: 0,
                    train_loss: 1.0 - accuracy(&model, &x, &y)?.unwrap_or(0.0),
                    val_accuracy: accuracy(&model, &xv, &yv)?,
                }],
            };
            Ok((model, log))
        }
    }
}

/// Fraction of labeled, audio-bearing clips of `split` that `model` gets right.
pub fn audio_accuracy(model: &AudioModel, ds: &Dataset, split: Split) -> Result<Option<f64>> {
    let (x, y) = audio_matrix(ds.labeled(split))?;
    accuracy(model, &x, &y)
}
