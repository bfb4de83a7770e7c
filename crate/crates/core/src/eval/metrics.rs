use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{ClassDistribution, Dataset, EmotionClass, Split};
use crate::error::{Error, Result};
use crate::scores::ScoreTable;

/// Ground-truth labels of one split, in dataset order.
pub fn split_labels(ds: &Dataset, split: Split) -> Vec<(String, EmotionClass)> {
    ds.labeled(split).map(|(c, l)| (c.id.clone(), l)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: usize,
    pub clip_count: usize,
    pub accuracy: f64,
    /// Recall per true class; zero for a class with no support.
    pub per_class_accuracy: Vec<f64>,
    /// Only present when a target distribution was supplied.
    pub weighted_accuracy: Option<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn support(&self) -> Vec<usize> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }

    /// Rows of `metric,class,predicted,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "class", "predicted", "value"])?;
        w.write_record(["clip_count", "", "", &self.clip_count.to_string()])?;
        w.write_record(["accuracy", "", "", &self.accuracy.to_string()])?;
        if let Some(wa) = self.weighted_accuracy {
            w.write_record(["weighted_accuracy", "", "", &wa.to_string()])?;
        }
        for (k, a) in self.per_class_accuracy.iter().enumerate() {
            w.write_record(["class_accuracy", &k.to_string(), "", &a.to_string()])?;
        }
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, n) in row.iter().enumerate() {
                w.write_record(["confusion", &t.to_string(), &p.to_string(), &n.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        buf
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "clips:             {}", self.clip_count)?;
        writeln!(f, "accuracy:          {:.4}", self.accuracy)?;
        if let Some(wa) = self.weighted_accuracy {
            writeln!(f, "weighted accuracy: {wa:.4}")?;
        }
        writeln!(f, "per-class accuracy:")?;
        let support = self.support();
        for (k, a) in self.per_class_accuracy.iter().enumerate() {
            let name = EmotionClass(k)
                .name()
                .map_or_else(|| format!("class {k}"), str::to_string);
            writeln!(f, "  {name:<10} {a:.4}  (n={})", support[k])?;
        }
        writeln!(f, "confusion (rows = true, columns = predicted):")?;
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|n| format!("{n:>4}")).collect();
            writeln!(f, "  {}", cells.join(""))?;
        }
        Ok(())
    }
}

/// Scores every labeled clip by the argmax of its prediction.
pub fn evaluate(
    preds: &ScoreTable,
    labels: &[(String, EmotionClass)],
    target: Option<&ClassDistribution>,
) -> Result<EvalReport> {
    let c = preds.classes();
    let mut confusion = vec![vec![0usize; c]; c];
    for (id, label) in labels {
        let scores = preds
            .get(id)
            .ok_or_else(|| Error::contract(format!("no prediction for labeled clip `{id}`")))?;
        if label.index() >= c {
            return Err(Error::contract(format!("label of clip `{id}` exceeds {c} classes")));
        }
        confusion[label.index()][scores.argmax().index()] += 1;
    }
    let total = labels.len();
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    let per_class_accuracy: Vec<f64> = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let n: usize = row.iter().sum();
            if n == 0 {
                0.0
            } else {
                row[k] as f64 / n as f64
            }
        })
        .collect();
    let weighted_accuracy = target.map(|d| weighted_accuracy(&per_class_accuracy, d)).transpose()?;
    Ok(EvalReport {
        classes: c,
        clip_count: total,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        per_class_accuracy,
        weighted_accuracy,
        confusion,
    })
}

/// `sum_i a_i n_i / total`: per-class accuracies reweighted to a target
/// class distribution.
///
/// Evaluated as `a_min + sum_i (a_i - a_min) n_i / total`, which is the
/// same quantity but returns a uniform accuracy bit-exactly.
pub fn weighted_accuracy(per_class_acc: &[f64], target: &ClassDistribution) -> Result<f64> {
    if per_class_acc.len() != target.classes() {
        return Err(Error::contract(format!(
            "{} per-class accuracies for a {}-class distribution",
            per_class_acc.len(),
            target.classes()
        )));
    }
    if target.total() == 0 {
        return Err(Error::contract("target distribution has no clips"));
    }
    let total = target.total() as f64;
    let base = per_class_acc.iter().copied().fold(f64::INFINITY, f64::min);
    let spread: f64 = per_class_acc
        .iter()
        .zip(target.counts())
        .map(|(a, &n)| (a - base) * n as f64 / total)
        .sum();
    Ok(base + spread)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::ScoreVector;
    use proptest::prelude::*;

    fn table(preds: &[usize], classes: usize) -> (ScoreTable, Vec<String>) {
        let mut t = ScoreTable::new(classes);
        let ids: Vec<String> = (0..preds.len()).map(|i| format!("c{i}")).collect();
        for (id, &p) in ids.iter().zip(preds) {
            t.insert(id.clone(), ScoreVector::one_hot(classes, EmotionClass(p)))
                .unwrap();
        }
        (t, ids)
    }

    fn labeled(ids: &[String], labels: &[usize]) -> Vec<(String, EmotionClass)> {
        ids.iter()
            .cloned()
            .zip(labels.iter().map(|&l| EmotionClass(l)))
            .collect()
    }

    #[test]
    fn all_correct_gives_identity_confusion() {
        let (t, ids) = table(&[0, 1, 2, 2], 3);
        let r = evaluate(&t, &labeled(&ids, &[0, 1, 2, 2]), None).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
    }

    #[test]
    fn constant_prediction_on_balanced_labels() {
        let (t, ids) = table(&[0; 14], 7);
        let labels: Vec<usize> = (0..14).map(|i| i % 7).collect();
        let r = evaluate(&t, &labeled(&ids, &labels), None).unwrap();
        assert!((r.accuracy - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn hand_counted_ten_clip_fixture() {
        let truth = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
        let preds = [0, 1, 0, 1, 1, 2, 1, 2, 0, 2];
        let (t, ids) = table(&preds, 3);
        let r = evaluate(&t, &labeled(&ids, &truth), None).unwrap();
        assert_eq!(r.confusion, vec![vec![2, 1, 0], vec![0, 3, 1], vec![1, 0, 2]]);
        assert_eq!(r.clip_count, 10);
        assert!((r.accuracy - 0.7).abs() < 1e-15);
        assert_eq!(r.per_class_accuracy, vec![2.0 / 3.0, 0.75, 2.0 / 3.0]);
    }

    #[test]
    fn missing_prediction_names_the_clip() {
        let (t, _) = table(&[0], 2);
        let err = evaluate(&t, &[("ghost".into(), EmotionClass(0))], None).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn first_class_only_with_test_counts() {
        let a = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let w = weighted_accuracy(&a, &ClassDistribution::afew_test()).unwrap();
        assert!((w - 99.0 / 653.0).abs() < 1e-12);
    }

    #[test]
    fn empty_distribution_rejected() {
        assert!(weighted_accuracy(&[0.5, 0.5], &ClassDistribution::new(vec![0, 0])).is_err());
    }

    #[test]
    fn csv_report_lists_both_accuracies() {
        let (t, ids) = table(&[0, 1], 2);
        let r = evaluate(&t, &labeled(&ids, &[0, 0]), Some(&ClassDistribution::new(vec![1, 3]))).unwrap();
        let text = String::from_utf8(r.to_csv_bytes()).unwrap();
        assert!(text.contains("accuracy,,,0.5"));
        assert!(text.contains("weighted_accuracy,,,0.125"));
    }

    proptest! {
        #[test]
        fn uniform_accuracy_is_fixed(a in 0.0f64..=1.0, counts in prop::collection::vec(0usize..200, 7)) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let w = weighted_accuracy(&[a; 7], &ClassDistribution::new(counts)).unwrap();
            prop_assert_eq!(w, a);
        }

        #[test]
        fn linear_and_bounded(
            a in prop::collection::vec(0.0f64..=1.0, 7),
            b in prop::collection::vec(0.0f64..=1.0, 7),
            t in 0.0f64..=1.0,
            counts in prop::collection::vec(1usize..200, 7),
        ) {
            let d = ClassDistribution::new(counts);
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            let lhs = weighted_accuracy(&mix, &d).unwrap();
            let rhs = t * weighted_accuracy(&a, &d).unwrap() + (1.0 - t) * weighted_accuracy(&b, &d).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&lhs));
        }

        #[test]
        fn own_distribution_gives_plain_accuracy(
            pairs in prop::collection::vec((0usize..7, 0usize..7), 1..80),
        ) {
            let (truth, preds): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let (t, ids) = table(&preds, 7);
            let labels = labeled(&ids, &truth);
            let mut own = vec![0; 7];
            for &l in &truth {
                own[l] += 1;
            }
            let r = evaluate(&t, &labels, Some(&ClassDistribution::new(own))).unwrap();
            prop_assert!((r.weighted_accuracy.unwrap() - r.accuracy).abs() < 1e-12);
        }
    }
}
