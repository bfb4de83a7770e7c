use log::{debug, info};
use rand::seq::SliceRandom;

use super::model::VideoModel;
use super::select::SelectedClip;
use crate::config::{HeadKind, TrainConfig};
use crate::data::{Dataset, EmotionClass, Split};
use crate::error::{Error, Result};
use crate::nn::{EpochRecord, Optimizer, TrainingLog};
use crate::rng::{derive_seed, rng_from_seed};

fn selections(model: &VideoModel, ds: &Dataset, split: Split) -> Result<Vec<(SelectedClip, EmotionClass)>> {
    ds.labeled(split)
        .map(|(clip, label)| Ok((model.select(clip)?, label)))
        .collect()
}

/// Accuracy of `model` on pre-selected clips; `None` for an empty set.
pub(crate) fn selected_accuracy(model: &VideoModel, clips: &[(SelectedClip, EmotionClass)]) -> Result<Option<f64>> {
    if clips.is_empty() {
        return Ok(None);
    }
    let mut correct = 0;
    for (sel, label) in clips {
        if model.predict_selected(sel)?.argmax() == *label {
            correct += 1;
        }
    }
    Ok(Some(correct as f64 / clips.len() as f64))
}

/// Trains a video head on the labeled train split of `ds`.
///
/// Frame selection runs once per clip up front. Each epoch shuffles the
/// training clips and takes one optimizer step per mini-batch of mean
/// cross-entropy. The score-mean head has nothing to train and is returned
/// as is, with an empty log.
pub fn train_video_model(ds: &Dataset, config: &TrainConfig, seed: u64) -> Result<(VideoModel, TrainingLog)> {
    let dims = ds.dims();
    let mut model = VideoModel::new(config, dims.feature_dim, dims.classes, seed)?;
    let mut log = TrainingLog::default();
    if config.head == HeadKind::ScoreMean {
        return Ok((model, log));
    }
    let train = selections(&model, ds, Split::Train)?;
    if train.is_empty() {
        return Err(Error::training("no labeled clips in the train split"));
    }
    let val = selections(&model, ds, Split::Val)?;
    let mut optimizer = Optimizer::new(config.optimizer, config.lr)?;
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    info!(
        "training {} head on {} clips for {} epochs (seed {seed})",
        config.head,
        train.len(),
        config.epochs
    );
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&SelectedClip, EmotionClass)> = chunk.iter().map(|&i| (&train[i].0, train[i].1)).collect();
            // Shapes were checked during selection, so a failure here means the
            // parameters blew up.
            let loss = model
                .head
                .batch_loss(&batch, true)
                .map_err(|e| Error::training(format!("epoch {epoch}: {e}")))?;
            if !loss.is_finite() {
                return Err(Error::training(format!("non-finite loss at epoch {epoch}")));
            }
            optimizer
                .step(model.head.params_mut())
                .map_err(|e| Error::training(format!("epoch {epoch}: {e}")))?;
            total += loss * batch.len() as f64;
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_accuracy: selected_accuracy(&model, &val)?,
        };
        debug!(
            "epoch {epoch}: loss {:.5} val {:?}",
            record.train_loss, record.val_accuracy
        );
        log.epochs.push(record);
    }
    model.optimizer = Some(optimizer);
    Ok((model, log))
}
