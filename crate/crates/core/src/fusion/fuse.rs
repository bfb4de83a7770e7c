use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::EmotionClass;
use crate::error::{Error, Result};
use crate::scores::{argmax, ScoreTable, ScoreVector, SUM_TOLERANCE};

/// Non-negative mixing weights, one per score source, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FusionWeights(Vec<f64>);

impl FusionWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::contract("fusion needs at least one weight"));
        }
        if !weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(Error::contract(format!(
                "fusion weights must be non-negative: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::contract(format!("fusion weights sum to {sum}, not 1")));
        }
        Ok(FusionWeights(weights))
    }

    pub fn uniform(sources: usize) -> Self {
        FusionWeights(vec![1.0 / sources as f64; sources])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for FusionWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FusionWeights> for Vec<f64> {
    fn from(w: FusionWeights) -> Self {
        w.0
    }
}

/// Comma-separated, e.g. `0.65,0.35`.
impl FromStr for FusionWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parsed: std::result::Result<Vec<f64>, _> = s.split(',').map(|w| w.trim().parse::<f64>()).collect();
        let weights = parsed.map_err(|e| Error::config(format!("bad fusion weights `{s}`: {e}")))?;
        Self::new(weights).map_err(|e| Error::config(e.to_string()))
    }
}

impl fmt::Display for FusionWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Componentwise mean of the sources, renormalized.
///
/// Defined as [`fuse_weighted`] with uniform weights, so the two agree
/// exactly.
pub fn fuse_mean(sources: &[&ScoreVector]) -> Result<ScoreVector> {
    if sources.is_empty() {
        return Err(Error::contract("cannot fuse an empty list of score vectors"));
    }
    fuse_weighted(sources, &FusionWeights::uniform(sources.len()))
}

/// `sum_i w_i s_i`, renormalized.
pub fn fuse_weighted(sources: &[&ScoreVector], weights: &FusionWeights) -> Result<ScoreVector> {
    if sources.is_empty() {
        return Err(Error::contract("cannot fuse an empty list of score vectors"));
    }
    if sources.len() != weights.len() {
        return Err(Error::contract(format!(
            "{} score sources but {} fusion weights",
            sources.len(),
            weights.len()
        )));
    }
    let c = sources[0].classes();
    if sources.iter().any(|s| s.classes() != c) {
        return Err(Error::contract("fused score vectors differ in class count"));
    }
    let mut acc = vec![0.0; c];
    for (s, &w) in sources.iter().zip(weights.as_slice()) {
        for (a, p) in acc.iter_mut().zip(s.as_slice()) {
            *a += w * p;
        }
    }
    ScoreVector::normalize(acc)
}

fn check_coverage(tables: &[&ScoreTable]) -> Result<()> {
    let first = tables
        .first()
        .ok_or_else(|| Error::contract("no score tables to fuse"))?;
    let ids: HashSet<&str> = first.ids().collect();
    for (i, t) in tables.iter().enumerate().skip(1) {
        if t.classes() != first.classes() {
            return Err(Error::contract(format!(
                "score source {i} has {} classes, source 0 has {}",
                t.classes(),
                first.classes()
            )));
        }
        if let Some(id) = t.ids().find(|id| !ids.contains(id)) {
            return Err(Error::contract(format!(
                "clip `{id}` is in score source {i} but not in source 0"
            )));
        }
        if t.len() != first.len() {
            let other: HashSet<&str> = t.ids().collect();
            let id = ids.iter().find(|id| !other.contains(*id)).expect("sizes differ");
            return Err(Error::contract(format!(
                "clip `{id}` is in score source 0 but not in source {i}"
            )));
        }
    }
    Ok(())
}

/// Fuses whole tables clip by clip; every table must cover the same clips.
pub fn fuse_tables(tables: &[&ScoreTable], weights: &FusionWeights) -> Result<ScoreTable> {
    check_coverage(tables)?;
    let mut out = ScoreTable::new(tables[0].classes());
    for id in tables[0].ids() {
        let row: Vec<&ScoreVector> = tables.iter().map(|t| t.get(id).expect("coverage checked")).collect();
        out.insert(id, fuse_weighted(&row, weights)?)?;
    }
    Ok(out)
}

/// Grid resolution used when none is given: 0.05 for two sources, 0.1 for
/// three or more.
pub fn default_grid_step(sources: usize) -> f64 {
    if sources <= 2 {
        0.05
    } else {
        0.1
    }
}

/// Calls `visit` with every composition of `total` into `parts`
/// non-negative integers, in lexicographic order.
fn compositions(parts: usize, total: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(k: &mut Vec<usize>, parts: usize, left: usize, visit: &mut impl FnMut(&[usize])) {
        if k.len() + 1 == parts {
            k.push(left);
            visit(k);
            k.pop();
            return;
        }
        for v in 0..=left {
            k.push(v);
            rec(k, parts, left - v, visit);
            k.pop();
        }
    }
    rec(&mut Vec::with_capacity(parts), parts, total, visit);
}

/// Exhaustive simplex grid search for the weights maximizing validation
/// accuracy of the fused argmax.
///
/// The grid has `N = round(1 / grid_step)` steps per unit, so unit vectors
/// are always candidates. Ties go to the candidate closest to uniform, then
/// to the lexicographically smallest weight vector.
pub fn learn_fusion_weights(
    val_scores: &[&ScoreTable],
    labels: &[(String, EmotionClass)],
    grid_step: f64,
) -> Result<FusionWeights> {
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::contract(format!("grid step {grid_step} outside (0, 0.5]")));
    }
    check_coverage(val_scores)?;
    let k = val_scores.len();
    let c = val_scores[0].classes();
    let rows = labeled_rows(val_scores, labels)?;
    let n = (1.0 / grid_step).round().max(1.0) as usize;

    let mut best: Option<(usize, usize, Vec<usize>)> = None;
    let mut fused = vec![0.0; c];
    compositions(k, n, &mut |ks| {
        let w: Vec<f64> = ks.iter().map(|&x| x as f64 / n as f64).collect();
        let correct = count_correct(&rows, &w, &mut fused);
        let spread: usize = ks.iter().map(|&x| (k * x).abs_diff(n).pow(2)).sum();
        let better = match &best {
            None => true,
            Some((bc, bs, _)) => correct > *bc || (correct == *bc && spread < *bs),
        };
        if better {
            best = Some((correct, spread, ks.to_vec()));
        }
    });
    let (_, _, ks) = best.expect("at least one grid point");
    FusionWeights::new(ks.iter().map(|&x| x as f64 / n as f64).collect())
}

/// Per labeled clip: the score slice of each source, and the label index.
fn labeled_rows<'a>(
    tables: &[&'a ScoreTable],
    labels: &[(String, EmotionClass)],
) -> Result<Vec<(Vec<&'a [f64]>, usize)>> {
    labels
        .iter()
        .map(|(id, label)| {
            let per_source = tables
                .iter()
                .map(|t| {
                    t.get(id)
                        .map(ScoreVector::as_slice)
                        .ok_or_else(|| Error::contract(format!("no scores for labeled clip `{id}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((per_source, label.index()))
        })
        .collect()
}

// Unnormalized mix; normalizing would not move the argmax.
fn count_correct(rows: &[(Vec<&[f64]>, usize)], w: &[f64], fused: &mut [f64]) -> usize {
    let mut correct = 0;
    for (sources, label) in rows {
        fused.iter_mut().for_each(|v| *v = 0.0);
        for (s, wi) in sources.iter().zip(w) {
            for (f, p) in fused.iter_mut().zip(s.iter()) {
                *f += wi * p;
            }
        }
        if argmax(fused) == *label {
            correct += 1;
        }
    }
    correct
}

/// Accuracy of the fused argmax on `labels` for fixed weights, scored the
/// same way as the grid search.
pub fn fused_accuracy(
    tables: &[&ScoreTable],
    weights: &FusionWeights,
    labels: &[(String, EmotionClass)],
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::contract("no labeled clips to score"));
    }
    if tables.iter().any(|t| t.classes() != tables[0].classes()) || tables.len() != weights.len() {
        return Err(Error::contract("score sources and weights do not line up"));
    }
    let rows = labeled_rows(tables, labels)?;
    let mut fused = vec![0.0; tables[0].classes()];
    Ok(count_correct(&rows, weights.as_slice(), &mut fused) as f64 / labels.len() as f64)
}
