//! CART decision trees and their ensembles: random forest and extra trees.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed};
use crate::tabular::EncodedDataset;
use crate::ScoredModel;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("cannot fit a tree on zero rows")]
    EmptyTrain,
    #[error("ensemble needs at least one tree")]
    NoTrees,
}

/// One node of a fitted CART tree. A split sends `x[feature] ≤ threshold`
/// to the left child.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        positive_fraction: f64,
        sample_count: usize,
    },
}

impl TreeNode {
    /// Leaf positive fraction reached by a feature row.
    pub fn score_row(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf {
                positive_fraction, ..
            } => *positive_fraction,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.score_row(x)
                } else {
                    right.score_row(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Gini impurity of a node with positive rate `q`.
pub fn gini(q: f64) -> f64 {
    1.0 - q * q - (1.0 - q) * (1.0 - q)
}

/// How candidate thresholds are proposed during split search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ThresholdPolicy {
    /// Midpoints between consecutive distinct sorted values (CART).
    Midpoints,
    /// One uniform random threshold in `[min, max)` per feature (extra trees).
    RandomUniform,
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    target: &'a [u8],
    max_depth: Option<usize>,
    min_samples_split: usize,
    feature_subsample: usize,
    policy: ThresholdPolicy,
    /// Accumulates weighted impurity decreases per feature when present.
    importance: Option<&'a mut Vec<f64>>,
    root_n: f64,
}

struct BestSplit {
    decrease: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> TreeBuilder<'a> {
    fn n_features(&self) -> usize {
        self.features[0].len()
    }

    /// Candidate features for one node: all of them, or a seeded draw without
    /// replacement, always evaluated in ascending index order so tie-breaking
    /// is canonical.
    fn candidate_features(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let p = self.n_features();
        if self.feature_subsample >= p {
            return (0..p).collect();
        }
        let mut pool: Vec<usize> = (0..p).collect();
        for i in 0..self.feature_subsample {
            let j = rng.gen_range(i..p);
            pool.swap(i, j);
        }
        let mut chosen = pool[..self.feature_subsample].to_vec();
        chosen.sort_unstable();
        chosen
    }

    fn consider(best: &mut Option<BestSplit>, cand: BestSplit) {
        let better = match best {
            None => true,
            Some(b) => {
                cand.decrease > b.decrease
                    || (cand.decrease == b.decrease
                        && (cand.feature < b.feature
                            || (cand.feature == b.feature && cand.threshold < b.threshold)))
            }
        };
        if better {
            *best = Some(cand);
        }
    }

    fn best_split(&mut self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let n = rows.len() as f64;
        let pos = rows.iter().filter(|&&i| self.target[i] == 1).count() as f64;
        let parent_gini = gini(pos / n);
        let mut best: Option<BestSplit> = None;

        for j in self.candidate_features(rng) {
            match self.policy {
                ThresholdPolicy::Midpoints => {
                    let mut vals: Vec<(f64, u8)> = rows
                        .iter()
                        .map(|&i| (self.features[i][j], self.target[i]))
                        .collect();
                    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
                    let mut left_n = 0.0;
                    let mut left_pos = 0.0;
                    let mut idx = 0;
                    while idx < vals.len() {
                        // Advance through one group of equal values.
                        let v = vals[idx].0;
                        while idx < vals.len() && vals[idx].0 == v {
                            left_n += 1.0;
                            left_pos += f64::from(vals[idx].1);
                            idx += 1;
                        }
                        if idx == vals.len() {
                            break;
                        }
                        let threshold = (v + vals[idx].0) / 2.0;
                        let right_n = n - left_n;
                        let right_pos = pos - left_pos;
                        let decrease = parent_gini
                            - (left_n * gini(left_pos / left_n)
                                + right_n * gini(right_pos / right_n))
                                / n;
                        Self::consider(
                            &mut best,
                            BestSplit {
                                decrease,
                                feature: j,
                                threshold,
                            },
                        );
                    }
                }
                ThresholdPolicy::RandomUniform => {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for &i in rows {
                        lo = lo.min(self.features[i][j]);
                        hi = hi.max(self.features[i][j]);
                    }
                    if lo == hi {
                        continue;
                    }
                    let threshold = rng.gen_range(lo..hi);
                    let mut left_n = 0.0;
                    let mut left_pos = 0.0;
                    for &i in rows {
                        if self.features[i][j] <= threshold {
                            left_n += 1.0;
                            left_pos += f64::from(self.target[i]);
                        }
                    }
                    let right_n = n - left_n;
                    if left_n == 0.0 || right_n == 0.0 {
                        continue;
                    }
                    let right_pos = pos - left_pos;
                    let decrease = parent_gini
                        - (left_n * gini(left_pos / left_n) + right_n * gini(right_pos / right_n))
                            / n;
                    Self::consider(
                        &mut best,
                        BestSplit {
                            decrease,
                            feature: j,
                            threshold,
                        },
                    );
                }
            }
        }
        best
    }

    fn build(&mut self, rows: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let n = rows.len();
        let pos = rows.iter().filter(|&&i| self.target[i] == 1).count();
        let leaf = |pos: usize, n: usize| TreeNode::Leaf {
            positive_fraction: pos as f64 / n as f64,
            sample_count: n,
        };
        if pos == 0 || pos == n || n < self.min_samples_split {
            return leaf(pos, n);
        }
        if let Some(cap) = self.max_depth {
            if depth >= cap {
                return leaf(pos, n);
            }
        }
        let Some(split) = self.best_split(rows, rng) else {
            return leaf(pos, n);
        };
        if let Some(acc) = self.importance.as_deref_mut() {
            acc[split.feature] += (n as f64 / self.root_n) * split.decrease;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.features[i][split.feature] <= split.threshold);
        let left = self.build(&left_rows, depth + 1, rng);
        let right = self.build(&right_rows, depth + 1, rng);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Fits a single CART tree with greedy Gini splits.
///
/// Candidate thresholds are midpoints between consecutive distinct sorted
/// values; ties resolve toward the larger impurity decrease, then the lower
/// feature index, then the lower threshold. The node splits whenever any
/// candidate produces two nonempty children, so zero-decrease splits (as in
/// XOR data) still happen.
pub fn fit_tree(
    train: &EncodedDataset,
    max_depth: Option<usize>,
    min_samples_split: usize,
    feature_subsample: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TreeNode, ForestError> {
    if train.n_rows() == 0 {
        return Err(ForestError::EmptyTrain);
    }
    let rows: Vec<usize> = (0..train.n_rows()).collect();
    let mut builder = TreeBuilder {
        features: &train.features,
        target: &train.target,
        max_depth,
        min_samples_split: min_samples_split.max(2),
        feature_subsample,
        policy: ThresholdPolicy::Midpoints,
        importance: None,
        root_n: train.n_rows() as f64,
    };
    Ok(builder.build(&rows, 0, rng))
}

/// A fitted tree ensemble; the score is the mean of per-tree leaf fractions.
#[derive(Debug, Clone)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub tree_seeds: Vec<u64>,
    pub feature_subsample: usize,
    pub bootstrap: bool,
}

impl ScoredModel for ForestModel {
    fn score(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.score_row(x)).sum();
        sum / self.trees.len() as f64
    }
}

impl ScoredModel for TreeNode {
    fn score(&self, x: &[f64]) -> f64 {
        self.score_row(x)
    }
}

fn sqrt_subsample(p: usize) -> usize {
    (p as f64).sqrt().ceil() as usize
}

fn fit_bagged(
    train: &EncodedDataset,
    n_trees: usize,
    max_depth: Option<usize>,
    seed: u64,
    label: &str,
    policy: ThresholdPolicy,
    bootstrap: bool,
    importance_out: Option<&mut Vec<f64>>,
) -> Result<ForestModel, ForestError> {
    if n_trees == 0 {
        return Err(ForestError::NoTrees);
    }
    if train.n_rows() == 0 {
        return Err(ForestError::EmptyTrain);
    }
    let n = train.n_rows();
    let p = train.n_features();
    let feature_subsample = sqrt_subsample(p);
    let mut acc = vec![0.0; p];
    let mut trees = Vec::with_capacity(n_trees);
    let mut tree_seeds = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let tree_seed = derive_seed(seed, label, t as u64);
        tree_seeds.push(tree_seed);
        let mut rng = rng_from_seed(tree_seed);
        let rows: Vec<usize> = if bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut builder = TreeBuilder {
            features: &train.features,
            target: &train.target,
            max_depth,
            min_samples_split: 2,
            feature_subsample,
            policy,
            importance: Some(&mut acc),
            root_n: rows.len() as f64,
        };
        trees.push(builder.build(&rows, 0, &mut rng));
    }
    if let Some(out) = importance_out {
        let total: f64 = acc.iter().sum();
        *out = if total > 0.0 {
            acc.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; p]
        };
    }
    Ok(ForestModel {
        trees,
        tree_seeds,
        feature_subsample,
        bootstrap,
    })
}

/// Fits a random forest: bootstrap resamples and ⌈√p⌉ candidate features per
/// split, soft-voted by mean leaf fraction.
pub fn fit_random_forest(
    train: &EncodedDataset,
    n_trees: usize,
    max_depth: Option<usize>,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    fit_bagged(
        train,
        n_trees,
        max_depth,
        seed,
        "rf-tree",
        ThresholdPolicy::Midpoints,
        true,
        None,
    )
}

/// Random forest plus its normalized impurity importances, the total weighted
/// Gini decrease attributed to each feature across all trees.
pub fn fit_random_forest_with_importance(
    train: &EncodedDataset,
    n_trees: usize,
    max_depth: Option<usize>,
    seed: u64,
) -> Result<(ForestModel, Vec<f64>), ForestError> {
    let mut importance = Vec::new();
    let model = fit_bagged(
        train,
        n_trees,
        max_depth,
        seed,
        "rf-tree",
        ThresholdPolicy::Midpoints,
        true,
        Some(&mut importance),
    )?;
    Ok((model, importance))
}

/// Fits extra trees: no bootstrap, and each candidate feature proposes one
/// uniform random threshold instead of the full midpoint scan.
pub fn fit_extra_trees(
    train: &EncodedDataset,
    n_trees: usize,
    max_depth: Option<usize>,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    fit_bagged(
        train,
        n_trees,
        max_depth,
        seed,
        "et-tree",
        ThresholdPolicy::RandomUniform,
        false,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn ds(features: Vec<Vec<f64>>, target: Vec<u8>) -> EncodedDataset {
        let p = features[0].len();
        EncodedDataset {
            features,
            target,
            feature_names: (0..p).map(|j| format!("x{j}")).collect(),
            norm_params: BTreeMap::new(),
        }
    }

    fn train_accuracy(tree: &TreeNode, data: &EncodedDataset) -> f64 {
        let correct = data
            .features
            .iter()
            .zip(&data.target)
            .filter(|(x, &y)| (tree.score_row(x) >= 0.5) as u8 == y)
            .count();
        correct as f64 / data.n_rows() as f64
    }

    #[test]
    fn pure_node_is_an_immediate_leaf() {
        let train = ds(vec![vec![0.0], vec![1.0], vec![0.5]], vec![1, 1, 1]);
        let mut rng = rng_from_seed(0);
        let tree = fit_tree(&train, None, 2, 1, &mut rng).expect("fit");
        assert_eq!(
            tree,
            TreeNode::Leaf {
                positive_fraction: 1.0,
                sample_count: 3
            }
        );
    }

    #[test]
    fn xor_reaches_perfect_training_accuracy_at_depth_two() {
        let train = ds(
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
            ],
            vec![0, 1, 1, 0],
        );
        let mut rng = rng_from_seed(0);
        let tree = fit_tree(&train, None, 2, 2, &mut rng).expect("fit");
        assert_eq!(tree.depth(), 2);
        assert_eq!(train_accuracy(&tree, &train), 1.0);
    }

    #[test]
    fn root_split_matches_exhaustive_oracle() {
        let train = ds(
            vec![
                vec![0.1, 0.9],
                vec![0.4, 0.2],
                vec![0.35, 0.6],
                vec![0.8, 0.3],
                vec![0.65, 0.85],
                vec![0.2, 0.45],
                vec![0.95, 0.5],
                vec![0.55, 0.1],
            ],
            vec![0, 0, 1, 1, 1, 0, 1, 0],
        );
        // Oracle: every (feature, midpoint threshold) pair, scanned blindly.
        let n = train.n_rows() as f64;
        let pos: f64 = train.target.iter().map(|&y| f64::from(y)).sum();
        let parent = gini(pos / n);
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..2 {
            let mut vals: Vec<f64> = train.features.iter().map(|r| r[j]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            vals.dedup();
            for w in vals.windows(2) {
                let threshold = (w[0] + w[1]) / 2.0;
                let (mut ln, mut lp) = (0.0, 0.0);
                for (row, &y) in train.features.iter().zip(&train.target) {
                    if row[j] <= threshold {
                        ln += 1.0;
                        lp += f64::from(y);
                    }
                }
                let (rn, rp) = (n - ln, pos - lp);
                let dec = parent - (ln * gini(lp / ln) + rn * gini(rp / rn)) / n;
                let cand = (dec, j, threshold);
                let better = match best {
                    None => true,
                    Some((bd, bf, bt)) => {
                        dec > bd || (dec == bd && (j < bf || (j == bf && threshold < bt)))
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (_, oracle_feature, oracle_threshold) = best.expect("some split");

        let mut rng = rng_from_seed(0);
        let tree = fit_tree(&train, Some(1), 2, 2, &mut rng).expect("fit");
        match tree {
            TreeNode::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, oracle_feature);
                assert!((threshold - oracle_threshold).abs() < 1e-15);
            }
            other => panic!("expected root split, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_forest_equals_single_tree() {
        let train = ds(
            vec![
                vec![0.2, 0.7],
                vec![0.9, 0.1],
                vec![0.4, 0.4],
                vec![0.6, 0.9],
                vec![0.1, 0.2],
                vec![0.8, 0.6],
            ],
            vec![0, 1, 0, 1, 0, 1],
        );
        // A forest degenerates to fit_tree when bootstrap is off and every
        // feature is considered; build that configuration directly.
        let mut importance = Vec::new();
        let forest = fit_bagged(
            &train,
            1,
            None,
            5,
            "rf-tree",
            ThresholdPolicy::Midpoints,
            false,
            Some(&mut importance),
        )
        .expect("forest");
        let mut rng = rng_from_seed(derive_seed(5, "rf-tree", 0));
        let plain = fit_tree(&train, None, 2, sqrt_subsample(2), &mut rng).expect("tree");
        for row in &train.features {
            assert_eq!(forest.score(row), plain.score_row(row));
        }
    }

    #[test]
    fn forests_are_seed_deterministic() {
        let train = ds(
            vec![
                vec![0.2, 0.7, 0.1],
                vec![0.9, 0.1, 0.8],
                vec![0.4, 0.4, 0.3],
                vec![0.6, 0.9, 0.7],
                vec![0.15, 0.25, 0.9],
                vec![0.85, 0.65, 0.2],
            ],
            vec![0, 1, 0, 1, 0, 1],
        );
        let a = fit_random_forest(&train, 12, None, 77).expect("fit");
        let b = fit_random_forest(&train, 12, None, 77).expect("fit");
        assert_eq!(a.trees, b.trees);
        let c = fit_extra_trees(&train, 12, None, 77).expect("fit");
        let d = fit_extra_trees(&train, 12, None, 77).expect("fit");
        assert_eq!(c.trees, d.trees);
    }

    #[test]
    fn extra_trees_on_constant_feature_leaves_root() {
        let train = ds(vec![vec![0.5], vec![0.5], vec![0.5]], vec![0, 1, 0]);
        let forest = fit_extra_trees(&train, 3, None, 1).expect("fit");
        for tree in &forest.trees {
            assert!(matches!(tree, TreeNode::Leaf { .. }));
        }
    }

    #[test]
    fn forest_score_is_mean_of_tree_scores() {
        let train = ds(
            vec![
                vec![0.2, 0.7],
                vec![0.9, 0.1],
                vec![0.4, 0.4],
                vec![0.6, 0.9],
            ],
            vec![0, 1, 0, 1],
        );
        let forest = fit_random_forest(&train, 7, None, 3).expect("fit");
        for row in &train.features {
            let mean: f64 = forest.trees.iter().map(|t| t.score_row(row)).sum::<f64>() / 7.0;
            assert!((forest.score(row) - mean).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&forest.score(row)));
        }
    }

    #[test]
    fn deepening_never_hurts_training_accuracy() {
        let train = ds(
            vec![
                vec![0.1, 0.3],
                vec![0.2, 0.9],
                vec![0.45, 0.5],
                vec![0.5, 0.1],
                vec![0.7, 0.8],
                vec![0.9, 0.35],
                vec![0.3, 0.65],
                vec![0.85, 0.95],
            ],
            vec![0, 1, 1, 0, 1, 0, 0, 1],
        );
        let mut last = 0.0;
        for depth in 1..6 {
            let mut rng = rng_from_seed(0);
            let tree = fit_tree(&train, Some(depth), 2, 2, &mut rng).expect("fit");
            let acc = train_accuracy(&tree, &train);
            assert!(
                acc >= last,
                "depth {depth} accuracy {acc} dropped below {last}"
            );
            last = acc;
        }
    }

    #[test]
    fn row_permutation_leaves_full_tree_unchanged() {
        let train = ds(
            vec![
                vec![0.1, 0.3],
                vec![0.2, 0.9],
                vec![0.45, 0.5],
                vec![0.5, 0.1],
                vec![0.7, 0.8],
                vec![0.9, 0.35],
            ],
            vec![0, 1, 1, 0, 1, 0],
        );
        let permuted = ds(
            vec![
                vec![0.9, 0.35],
                vec![0.45, 0.5],
                vec![0.1, 0.3],
                vec![0.7, 0.8],
                vec![0.5, 0.1],
                vec![0.2, 0.9],
            ],
            vec![0, 1, 0, 1, 0, 1],
        );
        let mut rng_a = rng_from_seed(0);
        let mut rng_b = rng_from_seed(0);
        let a = fit_tree(&train, None, 2, 2, &mut rng_a).expect("fit");
        let b = fit_tree(&permuted, None, 2, 2, &mut rng_b).expect("fit");
        assert_eq!(a, b);
    }

    #[test]
    fn importances_are_normalized_and_follow_signal() {
        // Feature 0 perfectly separates; feature 1 is noise.
        let train = ds(
            vec![
                vec![0.0, 0.3],
                vec![0.1, 0.9],
                vec![0.9, 0.2],
                vec![1.0, 0.8],
                vec![0.05, 0.6],
                vec![0.95, 0.4],
            ],
            vec![0, 0, 1, 1, 0, 1],
        );
        let (_, imp) = fit_random_forest_with_importance(&train, 30, None, 11).expect("fit");
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(imp[0] > imp[1]);
    }
}
