use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, EvalReport};
use super::runs::RunStatistics;
use crate::data::{Clip, Dataset, EmotionClass, Split};
use crate::error::{Error, Result};
use crate::rng::{par_map, rng_from_seed};
use crate::scores::ScoreTable;

/// Stratified fold index for each labeled clip, in input order.
///
/// Clips of each class are shuffled, then dealt round-robin with a counter
/// that carries over from one class to the next, so every fold holds
/// `floor` or `ceil` of `n_c / folds` clips of class `c` and fold sizes
/// differ by at most one. Each class present needs at least `folds` clips,
/// except for leave-one-out (`folds` equal to the clip count).
pub fn stratified_folds(labels: &[(String, EmotionClass)], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::config("cross-validation needs at least 2 folds"));
    }
    if folds > labels.len() {
        return Err(Error::config(format!(
            "{folds} folds but only {} labeled clips",
            labels.len()
        )));
    }
    let classes = labels.iter().map(|(_, l)| l.index() + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, (_, l)) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    let leave_one_out = folds == labels.len();
    if !leave_one_out {
        for (k, members) in by_class.iter().enumerate() {
            if !members.is_empty() && members.len() < folds {
                return Err(Error::config(format!(
                    "class {} has {} labeled clips, fewer than {folds} folds",
                    EmotionClass(k),
                    members.len()
                )));
            }
        }
    }
    let mut rng = rng_from_seed(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// `(clip id, fold)` for every labeled clip.
    pub assignment: Vec<(String, usize)>,
    /// Held-out accuracy per fold; the seed of fold `k` is `seed + k`.
    pub per_fold: RunStatistics,
    /// All held-out predictions evaluated together.
    pub pooled: EvalReport,
}

/// K-fold cross-validation over the merged labeled train and val clips.
///
/// For fold `k`, `fit_predict` receives a dataset whose train split is the
/// other folds and whose val split is fold `k`, plus the seed `seed + k`,
/// and must return scores for every val clip.
pub fn cross_validate<F>(ds: &Dataset, folds: usize, seed: u64, jobs: usize, fit_predict: F) -> Result<CrossValidation>
where
    F: Fn(&Dataset, u64) -> Result<ScoreTable> + Sync + Send,
{
    let pool: Vec<&Clip> = ds
        .clips()
        .iter()
        .filter(|c| c.label.is_some() && matches!(c.split, Split::Train | Split::Val))
        .collect();
    let labels: Vec<(String, EmotionClass)> = pool.iter().map(|c| (c.id.clone(), c.label.unwrap())).collect();
    let assignment = stratified_folds(&labels, folds, seed)?;

    let fold_sets: Vec<Dataset> = (0..folds)
        .map(|k| {
            let clips = pool
                .iter()
                .zip(&assignment)
                .map(|(c, &f)| Clip {
                    split: if f == k { Split::Val } else { Split::Train },
                    ..(*c).clone()
                })
                .collect();
            ds.derive(clips)
        })
        .collect::<Result<_>>()?;
    let tables = par_map(jobs, fold_sets.iter().enumerate().collect(), |(k, fold_ds)| {
        fit_predict(fold_ds, seed + k as u64).map_err(|e| Error::training(format!("fold {k}: {e}")))
    })?;

    let mut pooled_scores = ScoreTable::new(ds.classes());
    let mut accuracies = Vec::with_capacity(folds);
    for (k, table) in tables.iter().enumerate() {
        let held: Vec<(String, EmotionClass)> = labels
            .iter()
            .zip(&assignment)
            .filter(|(_, &f)| f == k)
            .map(|(l, _)| l.clone())
            .collect();
        accuracies.push(evaluate(table, &held, None)?.accuracy);
        for (id, _) in &held {
            pooled_scores.insert(id.clone(), table.get(id).expect("checked by evaluate").clone())?;
        }
    }
    let pooled = evaluate(&pooled_scores, &labels, None)?;
    let seeds = (0..folds as u64).map(|k| seed + k).collect();
    Ok(CrossValidation {
        assignment: labels.iter().map(|(id, _)| id.clone()).zip(assignment).collect(),
        per_fold: RunStatistics::from_runs(seeds, accuracies)?,
        pooled,
    })
}

/// Fold sizes per class: `counts[fold][class]`.
pub fn fold_class_counts(labels: &[(String, EmotionClass)], assignment: &[usize], folds: usize) -> Vec<Vec<usize>> {
    let classes = labels.iter().map(|(_, l)| l.index() + 1).max().unwrap_or(0);
    let mut counts = vec![vec![0; classes]; folds];
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
    for (id, l) in labels {
        counts[assignment[index[id.as_str()]]][l.index()] += 1;
    }
    counts
}
