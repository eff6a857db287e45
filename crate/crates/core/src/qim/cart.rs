//! Greedy CART on a binary failure target.

use serde::{Deserialize, Serialize};

use super::bounds::gini;
use crate::error::{domain, Error, Result};

/// One training or calibration row: feature values in schema order plus
/// whether the wrapped classifier failed on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub failed: bool,
}

impl Sample {
    pub fn new(features: Vec<f64>, failed: bool) -> Self {
        Self { features, failed }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub train_error_count: u64,
    pub train_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated_uncertainty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_error_count: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    /// Values `<= threshold` go left.
    Split {
        feature: String,
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(Leaf),
}

impl TreeNode {
    pub fn route(&self, features: &[f64]) -> &Leaf {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split { feature_index, threshold, left, right, .. } => {
                    node = if features[*feature_index] <= *threshold { left } else { right };
                }
                TreeNode::Leaf(leaf) => return leaf,
            }
        }
    }

    /// Position of the routed leaf in left-to-right order.
    pub fn leaf_index(&self, features: &[f64]) -> usize {
        let mut node = self;
        let mut offset = 0;
        loop {
            match node {
                TreeNode::Split { feature_index, threshold, left, right, .. } => {
                    if features[*feature_index] <= *threshold {
                        node = left;
                    } else {
                        offset += left.n_leaves();
                        node = right;
                    }
                }
                TreeNode::Leaf(_) => return offset,
            }
        }
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Leaf>) {
        match self {
            TreeNode::Split { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
            TreeNode::Leaf(leaf) => out.push(leaf),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
            TreeNode::Leaf(_) => 1,
        }
    }

    /// Number of split levels; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf(_) => 0,
        }
    }
}

// Candidate splits closer than this count as ties.
const TIE_EPS: f64 = 1e-12;

/// Fits a CART tree minimizing weighted child gini at every node.
///
/// Growth stops at `max_depth`, at pure nodes, and where no split lowers
/// the impurity. Thresholds are midpoints between adjacent observed values;
/// ties go to the lower feature index, then the lower threshold.
pub fn fit_tree(samples: &[Sample], feature_names: &[String], max_depth: usize) -> Result<TreeNode> {
    if samples.is_empty() {
        return domain("cannot fit a tree on zero samples");
    }
    let width = feature_names.len();
    if let Some(bad) = samples.iter().position(|s| s.features.len() != width) {
        return Err(Error::SchemaMismatch(format!(
            "sample {bad} has {} features, schema has {width}",
            samples[bad].features.len()
        )));
    }
    if samples.iter().any(|s| s.features.iter().any(|v| !v.is_finite())) {
        return domain("non-finite feature value");
    }
    let indices: Vec<usize> = (0..samples.len()).collect();
    Ok(grow(samples, feature_names, indices, 0, max_depth))
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn grow(samples: &[Sample], names: &[String], indices: Vec<usize>, depth: usize, max_depth: usize) -> TreeNode {
    let n = indices.len() as u64;
    let errors = indices.iter().filter(|&&i| samples[i].failed).count() as u64;
    let leaf = || TreeNode::Leaf(Leaf { train_error_count: errors, train_count: n, ..Leaf::default() });

    if depth >= max_depth || errors == 0 || errors == n {
        return leaf();
    }
    let Some(best) = best_split(samples, &indices, names.len(), gini(errors, n)) else {
        return leaf();
    };

    let (left, right): (Vec<usize>, Vec<usize>) =
        indices.into_iter().partition(|&i| samples[i].features[best.feature] <= best.threshold);
    TreeNode::Split {
        feature: names[best.feature].clone(),
        feature_index: best.feature,
        threshold: best.threshold,
        left: Box::new(grow(samples, names, left, depth + 1, max_depth)),
        right: Box::new(grow(samples, names, right, depth + 1, max_depth)),
    }
}

fn best_split(samples: &[Sample], indices: &[usize], width: usize, parent_impurity: f64) -> Option<BestSplit> {
    let n = indices.len() as u64;
    let total_errors = indices.iter().filter(|&&i| samples[i].failed).count() as u64;
    let mut best: Option<BestSplit> = None;
    let mut best_impurity = parent_impurity;
    let mut order = indices.to_vec();

    for feature in 0..width {
        order.sort_by(|&a, &b| samples[a].features[feature].total_cmp(&samples[b].features[feature]));
        let mut left_n = 0u64;
        let mut left_err = 0u64;
        for pair in order.windows(2) {
            let (cur, next) = (pair[0], pair[1]);
            left_n += 1;
            left_err += u64::from(samples[cur].failed);
            let (v, w) = (samples[cur].features[feature], samples[next].features[feature]);
            if v == w {
                continue;
            }
            let right_n = n - left_n;
            let right_err = total_errors - left_err;
            let impurity =
                (left_n as f64 * gini(left_err, left_n) + right_n as f64 * gini(right_err, right_n)) / n as f64;
            if impurity < best_impurity - TIE_EPS {
                best_impurity = impurity;
                best = Some(BestSplit { feature, threshold: 0.5 * (v + w), impurity });
            }
        }
    }
    best.filter(|b| b.impurity < parent_impurity - TIE_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn all_correct_gives_single_pure_leaf() {
        let samples: Vec<Sample> = (0..50).map(|i| Sample::new(vec![(i % 4) as f64], false)).collect();
        let tree = fit_tree(&samples, &names(1), 8).unwrap();
        assert_eq!(tree, TreeNode::Leaf(Leaf { train_error_count: 0, train_count: 50, ..Leaf::default() }));
    }

    #[test]
    fn separable_binary_feature_splits_at_midpoint() {
        let samples: Vec<Sample> = (0..20).map(|i| Sample::new(vec![(i % 2) as f64], i % 2 == 1)).collect();
        let tree = fit_tree(&samples, &names(1), 8).unwrap();
        match tree {
            TreeNode::Split { threshold, feature_index, left, right, .. } => {
                assert_eq!(threshold, 0.5);
                assert_eq!(feature_index, 0);
                assert_eq!(*left, TreeNode::Leaf(Leaf { train_error_count: 0, train_count: 10, ..Leaf::default() }));
                assert_eq!(*right, TreeNode::Leaf(Leaf { train_error_count: 10, train_count: 10, ..Leaf::default() }));
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn ties_prefer_lower_feature_index() {
        // two identical columns: both give the same split
        let samples: Vec<Sample> =
            (0..10).map(|i| Sample::new(vec![(i % 2) as f64, (i % 2) as f64], i % 2 == 0)).collect();
        match fit_tree(&samples, &names(2), 8).unwrap() {
            TreeNode::Split { feature_index, .. } => assert_eq!(feature_index, 0),
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn respects_max_depth() {
        let samples: Vec<Sample> = (0..64).map(|i| Sample::new(vec![i as f64], (i / 3) % 2 == 0)).collect();
        assert_eq!(fit_tree(&samples, &names(1), 0).unwrap().depth(), 0);
        assert!(fit_tree(&samples, &names(1), 3).unwrap().depth() <= 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit_tree(&[], &names(1), 8), Err(Error::Domain(_))));
        let ragged = vec![Sample::new(vec![1.0], true), Sample::new(vec![1.0, 2.0], false)];
        assert!(matches!(fit_tree(&ragged, &names(1), 8), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn leaf_index_follows_left_to_right_order() {
        let samples: Vec<Sample> = (0..40).map(|i| Sample::new(vec![(i % 4) as f64], i % 4 >= 2)).collect();
        let tree = fit_tree(&samples, &names(1), 8).unwrap();
        let leaves = tree.leaves();
        for v in 0..4 {
            let idx = tree.leaf_index(&[v as f64]);
            assert!(std::ptr::eq(leaves[idx], tree.route(&[v as f64])));
        }
    }
}
