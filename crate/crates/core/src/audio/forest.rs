//! CART trees with Gini impurity and bootstrap-aggregated forests.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, KernelRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class counts of the (bootstrap) training samples reaching this leaf.
    Leaf { counts: Vec<usize> },
}

/// A tree stored as an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64]) -> &[usize] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Normalized class histogram of the leaf reached by `x`.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let counts = self.leaf_for(x);
        let total: usize = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: Option<usize>,
    /// Features examined per split.
    pub features_per_split: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub classes: usize,
    pub features: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean of the per-tree normalized leaf histograms.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.features {
            return Err(Error::contract(format!(
                "forest expects {} features, got {}",
                self.features,
                x.len()
            )));
        }
        let mut acc = vec![0.0; self.classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.predict(x)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }
}

/// `n * gini` for a class histogram over `n` samples: `n - sum(c^2) / n`.
fn scaled_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        0.0
    } else {
        scaled_gini(counts, n) / n as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Candidate {
    /// Strictly higher gain wins; equal gains go to the lower feature, then
    /// the lower threshold.
    fn beats(&self, other: &Candidate) -> bool {
        self.gain > other.gain
            || (self.gain == other.gain && (self.feature, self.threshold) < (other.feature, other.threshold))
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    classes: usize,
    params: ForestParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Best threshold on one feature, sweeping sorted values.
    fn best_on_feature(&self, idx: &mut [usize], feature: usize, parent: &[usize]) -> Option<Candidate> {
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let n = idx.len();
        let parent_score = scaled_gini(parent, n);
        let mut left = vec![0usize; self.classes];
        let mut right = parent.to_vec();
        let mut best: Option<Candidate> = None;
        for k in 0..n - 1 {
            let c = self.y[idx[k]];
            left[c] += 1;
            right[c] -= 1;
            let (lo, hi) = (x[idx[k]][feature], x[idx[k + 1]][feature]);
            if lo == hi {
                continue;
            }
            let gain = (parent_score - scaled_gini(&left, k + 1) - scaled_gini(&right, n - k - 1)) / n as f64;
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            let cand = Candidate {
                feature,
                threshold,
                gain,
            };
            if best.is_none_or(|b| cand.beats(&b)) {
                best = Some(cand);
            }
        }
        best
    }

    /// Examines `m` random features; if none gives a positive gain, keeps
    /// drawing from the rest until one does.
    fn choose_split(&self, idx: &[usize], parent: &[usize], rng: &mut KernelRng) -> Option<Candidate> {
        let d = self.x[0].len();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(rng);
        let mut scratch = idx.to_vec();
        let mut best: Option<Candidate> = None;
        for (visited, &f) in order.iter().enumerate() {
            if visited >= self.params.features_per_split && best.is_some() {
                break;
            }
            if let Some(c) = self.best_on_feature(&mut scratch, f, parent) {
                if c.gain > 0.0 && best.is_none_or(|b| c.beats(&b)) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, rng: &mut KernelRng) {
        // Explicit stack of (node slot, samples, depth) keeps deep trees off the call stack.
        self.nodes.push(Node::Leaf { counts: Vec::new() });
        let mut stack = vec![(0usize, idx, 0usize)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let counts = self.counts(&idx);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let capped = self.params.max_depth.is_some_and(|m| depth >= m);
            let split = if pure || capped || idx.len() < 2 {
                None
            } else {
                self.choose_split(&idx, &counts, rng)
            };
            match split {
                None => self.nodes[slot] = Node::Leaf { counts },
                Some(c) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| self.x[i][c.feature] <= c.threshold);
                    let left = self.nodes.len();
                    self.nodes.push(Node::Leaf { counts: Vec::new() });
                    self.nodes.push(Node::Leaf { counts: Vec::new() });
                    self.nodes[slot] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    stack.push((left + 1, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
    }
}

/// Grows one CART tree on the rows `sample` (indices may repeat).
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[usize],
    classes: usize,
    sample: Vec<usize>,
    params: ForestParams,
    rng: &mut KernelRng,
) -> Tree {
    let mut b = Builder {
        x,
        y,
        classes,
        params,
        nodes: Vec::new(),
    };
    b.build(sample, rng);
    Tree { nodes: b.nodes }
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn bootstrap_sample(n: usize, rng: &mut KernelRng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Fits `params.trees` trees on bootstrap samples; tree `t` draws from
/// `derive_seed(seed, t)`, so the forest does not depend on thread count.
pub fn fit_forest(x: &[Vec<f64>], y: &[usize], classes: usize, params: ForestParams, seed: u64) -> Result<Forest> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::training("random forest needs at least 2 labeled training clips"));
    }
    let features = x[0].len();
    if features == 0 || x.iter().any(|r| r.len() != features) {
        return Err(Error::contract("forest rows must share one nonzero width"));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
        return Err(Error::contract(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    if params.trees == 0 || params.features_per_split == 0 {
        return Err(Error::config(
            "forest needs at least one tree and one feature per split",
        ));
    }
    let params = ForestParams {
        features_per_split: params.features_per_split.min(features),
        ..params
    };
    let trees = (0..params.trees as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, t));
            let sample = bootstrap_sample(x.len(), &mut rng);
            fit_tree(x, y, classes, sample, params, &mut rng)
        })
        .collect();
    Ok(Forest {
        classes,
        features,
        params,
        trees,
    })
}

/// `floor(sqrt(d))`, at least one.
pub fn default_features_per_split(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn params(trees: usize, m: usize) -> ForestParams {
        ForestParams {
            trees,
            max_depth: None,
            features_per_split: m,
        }
    }

    #[test]
    fn depth_zero_tree_on_constant_labels_is_one_hot() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = vec![3; 5];
        let p = ForestParams {
            max_depth: Some(0),
            ..params(1, 1)
        };
        let f = fit_forest(&x, &y, 7, p, 0).unwrap();
        assert_eq!(f.trees[0].nodes.len(), 1);
        assert_eq!(f.predict(&[2.0]).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_hand_built_trees_average_histograms() {
        let leaf = |c: Vec<usize>| Node::Leaf { counts: c };
        let t1 = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.0,
                    left: 1,
                    right: 2,
                },
                leaf(vec![3, 1, 0]),
                leaf(vec![0, 0, 2]),
            ],
        };
        let t2 = Tree {
            nodes: vec![leaf(vec![1, 1, 2])],
        };
        let f = Forest {
            classes: 3,
            features: 1,
            params: params(2, 1),
            trees: vec![t1, t2],
        };
        // (0.75, 0.25, 0) and (0.25, 0.25, 0.5) averaged.
        assert_eq!(f.predict(&[-1.0]).unwrap(), vec![0.5, 0.25, 0.25]);
        assert_eq!(f.predict(&[1.0]).unwrap(), vec![0.125, 0.125, 0.75]);
    }

    #[test]
    fn threshold_falls_in_the_gap() {
        let x: Vec<Vec<f64>> = [0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9]
            .iter()
            .map(|&v| vec![v])
            .collect();
        let y = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let tree = fit_tree(&x, &y, 2, (0..8).collect(), params(1, 1), &mut rng_from_seed(0));
        let Node::Split { threshold, .. } = tree.nodes[0] else {
            panic!("root should split")
        };
        assert!(threshold > 0.4 && threshold < 0.6, "{threshold}");
        let f = fit_forest(&x, &y, 2, params(20, 1), 4).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            let p = f.predict(xi).unwrap();
            assert_eq!(crate::scores::argmax(&p), yi);
        }
    }

    #[test]
    fn ties_prefer_lower_feature_and_threshold() {
        // Features 0 and 1 separate the classes equally well.
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let tree = fit_tree(&x, &[0, 1], 2, vec![0, 1], params(1, 2), &mut rng_from_seed(9));
        assert!(matches!(tree.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn leaf_counts_sum_to_samples() {
        let mut rng = rng_from_seed(1);
        let x: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let sample = bootstrap_sample(60, &mut rng);
        let tree = fit_tree(&x, &y, 3, sample, params(1, 2), &mut rng);
        let total: usize = tree
            .nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { counts } => counts.iter().sum(),
                Node::Split { .. } => 0,
            })
            .sum();
        assert_eq!(total, 60);
    }

    #[test]
    fn out_of_bag_fraction_near_one_over_e() {
        let mut rng = rng_from_seed(2);
        for n in [200, 500, 1000] {
            let sample = bootstrap_sample(n, &mut rng);
            assert_eq!(sample.len(), n);
            let mut seen = vec![false; n];
            for i in sample {
                seen[i] = true;
            }
            let oob = seen.iter().filter(|&&s| !s).count() as f64 / n as f64;
            assert!((oob - (-1.0f64).exp()).abs() < 0.05, "n={n}: {oob}");
        }
    }

    #[test]
    fn fewer_than_two_clips_rejected() {
        assert!(matches!(
            fit_forest(&[vec![1.0]], &[0], 2, params(1, 1), 0),
            Err(Error::Training(_))
        ));
    }

    proptest! {
        #[test]
        fn accepted_splits_never_raise_impurity(
            rows in prop::collection::vec((prop::collection::vec(-3i8..3, 3), 0usize..3), 2..40),
            seed in 0u64..1000,
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|(r, _)| r.iter().map(|&v| f64::from(v)).collect()).collect();
            let y: Vec<usize> = rows.iter().map(|(_, c)| *c).collect();
            let mut rng = rng_from_seed(seed);
            let sample = bootstrap_sample(x.len(), &mut rng);
            let tree = fit_tree(&x, &y, 3, sample.clone(), params(1, 1), &mut rng);
            // Replay sample routing to get each node's class counts.
            let mut node_counts = vec![vec![0usize; 3]; tree.nodes.len()];
            for &i in &sample {
                let mut at = 0;
                loop {
                    node_counts[at][y[i]] += 1;
                    match &tree.nodes[at] {
                        Node::Leaf { .. } => break,
                        Node::Split { feature, threshold, left, right } => {
                            prop_assert!(threshold.is_finite());
                            at = if x[i][*feature] <= *threshold { *left } else { *right };
                        }
                    }
                }
            }
            for node in &tree.nodes {
                if let Node::Split { left, right, .. } = node {
                    let (l, r) = (&node_counts[*left], &node_counts[*right]);
                    let parent: Vec<usize> = l.iter().zip(r).map(|(a, b)| a + b).collect();
                    let (nl, nr) = (l.iter().sum::<usize>() as f64, r.iter().sum::<usize>() as f64);
                    let child = (nl * gini(l) + nr * gini(r)) / (nl + nr);
                    prop_assert!(child <= gini(&parent) + 1e-12);
                }
            }
        }

        #[test]
        fn prediction_ignores_tree_order(seed in 0u64..200) {
            let mut rng = rng_from_seed(seed);
            let x: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
            let f = fit_forest(&x, &y, 3, params(8, 1), seed).unwrap();
            let mut g = f.clone();
            g.trees.reverse();
            for xi in &x {
                let (a, b) = (f.predict(xi).unwrap(), g.predict(xi).unwrap());
                for (p, q) in a.iter().zip(&b) {
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }
        }
    }
}
