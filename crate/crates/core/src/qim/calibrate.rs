//! Calibration-driven pruning and per-leaf uncertainty guarantees.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bounds::clopper_pearson_upper;
use super::cart::{Leaf, Sample, TreeNode};
use crate::dataset::QfSpec;
use crate::error::{domain, Error, Result};

/// A fitted tree whose leaves carry calibrated upper-bound uncertainties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedTree {
    pub schema: Vec<QfSpec>,
    pub confidence_level: f64,
    pub min_leaf_calibration: u64,
    pub root: TreeNode,
}

impl CalibratedTree {
    pub fn feature_names(&self) -> Vec<String> {
        self.schema.iter().map(|s| s.name.clone()).collect()
    }

    /// Calibrated uncertainty of the leaf `features` routes to.
    pub fn predict_uncertainty(&self, features: &[f64]) -> Result<f64> {
        self.check_width(features)?;
        self.root
            .route(features)
            .calibrated_uncertainty
            .ok_or_else(|| Error::Domain("leaf without calibrated uncertainty".into()))
    }

    /// Resolves every schema feature through `lookup` before predicting.
    pub fn predict_by_name(&self, lookup: impl Fn(&str) -> Option<f64>) -> Result<f64> {
        let row = self.row_by_name(lookup)?;
        self.predict_uncertainty(&row)
    }

    pub fn row_by_name(&self, lookup: impl Fn(&str) -> Option<f64>) -> Result<Vec<f64>> {
        self.schema
            .iter()
            .map(|s| lookup(&s.name).ok_or_else(|| Error::SchemaMismatch(format!("feature '{}' not provided", s.name))))
            .collect()
    }

    pub fn leaf_index(&self, features: &[f64]) -> Result<usize> {
        self.check_width(features)?;
        Ok(self.root.leaf_index(features))
    }

    pub fn leaves(&self) -> Vec<&Leaf> {
        self.root.leaves()
    }

    fn check_width(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} features given, tree expects {}",
                features.len(),
                self.schema.len()
            )));
        }
        Ok(())
    }

    /// Checks the structural invariants of a deserialized tree.
    pub fn verify(&self) -> Result<()> {
        fn walk(node: &TreeNode, tree: &CalibratedTree) -> Result<()> {
            match node {
                TreeNode::Split { feature, feature_index, threshold, left, right } => {
                    match tree.schema.get(*feature_index) {
                        Some(spec) if spec.name == *feature => {}
                        _ => {
                            return Err(Error::SchemaMismatch(format!(
                                "split feature '{feature}' not at index {feature_index}"
                            )))
                        }
                    }
                    if !threshold.is_finite() {
                        return domain("non-finite threshold");
                    }
                    walk(left, tree)?;
                    walk(right, tree)
                }
                TreeNode::Leaf(leaf) => {
                    let (Some(u), Some(count)) = (leaf.calibrated_uncertainty, leaf.calibration_count) else {
                        return domain("uncalibrated leaf");
                    };
                    if !(u > 0.0 && u <= 1.0) {
                        return domain(format!("calibrated uncertainty {u} outside (0, 1]"));
                    }
                    if count < tree.min_leaf_calibration {
                        return domain(format!(
                            "leaf holds {count} calibration records, minimum is {}",
                            tree.min_leaf_calibration
                        ));
                    }
                    Ok(())
                }
            }
        }
        walk(&self.root, self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: Self = serde_json::from_str(text)?;
        tree.verify()?;
        Ok(tree)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let tree: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        tree.verify()?;
        Ok(tree)
    }
}

/// Routes the calibration set through `tree`, merges leaves until each holds
/// at least `min_leaf` calibration records, and attaches a one-sided upper
/// bound at `confidence` to every remaining leaf.
///
/// Merging always collapses the parent of the deepest deficient leaf
/// (leftmost on ties) into a single leaf.
pub fn calibrate_tree(
    tree: &TreeNode,
    schema: &[QfSpec],
    calibration: &[Sample],
    min_leaf: u64,
    confidence: f64,
) -> Result<CalibratedTree> {
    if !(confidence > 0.5 && confidence < 1.0) {
        return domain(format!("confidence {confidence} outside (0.5, 1)"));
    }
    if calibration.is_empty() {
        return domain("empty calibration set");
    }
    if min_leaf == 0 {
        return domain("minimum leaf size must be positive");
    }
    if (calibration.len() as u64) < min_leaf {
        return Err(Error::CalibrationInfeasible { available: calibration.len(), required: min_leaf as usize });
    }
    if let Some(s) = calibration.iter().find(|s| s.features.len() != schema.len()) {
        return Err(Error::SchemaMismatch(format!(
            "calibration sample has {} features, schema has {}",
            s.features.len(),
            schema.len()
        )));
    }

    let mut root = tree.clone();
    reset_calibration(&mut root);
    for sample in calibration {
        let leaf = route_mut(&mut root, &sample.features);
        *leaf.calibration_count.get_or_insert(0) += 1;
        *leaf.calibration_error_count.get_or_insert(0) += u64::from(sample.failed);
    }

    while let Some(path) = deepest_deficient_leaf(&root, min_leaf) {
        let parent = node_at_mut(&mut root, &path[..path.len() - 1]);
        *parent = TreeNode::Leaf(collapse(parent));
    }

    attach_bounds(&mut root, confidence)?;
    Ok(CalibratedTree { schema: schema.to_vec(), confidence_level: confidence, min_leaf_calibration: min_leaf, root })
}

fn reset_calibration(node: &mut TreeNode) {
    match node {
        TreeNode::Split { left, right, .. } => {
            reset_calibration(left);
            reset_calibration(right);
        }
        TreeNode::Leaf(leaf) => {
            leaf.calibration_count = Some(0);
            leaf.calibration_error_count = Some(0);
            leaf.calibrated_uncertainty = None;
        }
    }
}

fn route_mut<'a>(node: &'a mut TreeNode, features: &[f64]) -> &'a mut Leaf {
    match node {
        TreeNode::Split { feature_index, threshold, left, right, .. } => {
            if features[*feature_index] <= *threshold {
                route_mut(left, features)
            } else {
                route_mut(right, features)
            }
        }
        TreeNode::Leaf(leaf) => leaf,
    }
}

/// Path (false = left) to the deepest leaf below `min_leaf`, leftmost on ties.
fn deepest_deficient_leaf(root: &TreeNode, min_leaf: u64) -> Option<Vec<bool>> {
    fn walk(node: &TreeNode, min_leaf: u64, path: &mut Vec<bool>, best: &mut Option<Vec<bool>>) {
        match node {
            TreeNode::Split { left, right, .. } => {
                path.push(false);
                walk(left, min_leaf, path, best);
                path.pop();
                path.push(true);
                walk(right, min_leaf, path, best);
                path.pop();
            }
            TreeNode::Leaf(leaf) => {
                let deficient = leaf.calibration_count.unwrap_or(0) < min_leaf;
                let deeper = best.as_ref().is_none_or(|b| path.len() > b.len());
                if deficient && deeper && !path.is_empty() {
                    *best = Some(path.clone());
                }
            }
        }
    }
    let mut best = None;
    walk(root, min_leaf, &mut Vec::new(), &mut best);
    best
}

fn node_at_mut<'a>(mut node: &'a mut TreeNode, path: &[bool]) -> &'a mut TreeNode {
    for &go_right in path {
        node = match node {
            TreeNode::Split { left, right, .. } => {
                if go_right {
                    right
                } else {
                    left
                }
            }
            TreeNode::Leaf(_) => unreachable!("path runs through a leaf"),
        };
    }
    node
}

fn collapse(node: &TreeNode) -> Leaf {
    node.leaves().into_iter().fold(
        Leaf {
            train_error_count: 0,
            train_count: 0,
            calibrated_uncertainty: None,
            calibration_count: Some(0),
            calibration_error_count: Some(0),
        },
        |mut acc, leaf| {
            acc.train_error_count += leaf.train_error_count;
            acc.train_count += leaf.train_count;
            *acc.calibration_count.get_or_insert(0) += leaf.calibration_count.unwrap_or(0);
            *acc.calibration_error_count.get_or_insert(0) += leaf.calibration_error_count.unwrap_or(0);
            acc
        },
    )
}

fn attach_bounds(node: &mut TreeNode, confidence: f64) -> Result<()> {
    match node {
        TreeNode::Split { left, right, .. } => {
            attach_bounds(left, confidence)?;
            attach_bounds(right, confidence)
        }
        TreeNode::Leaf(leaf) => {
            let n = leaf.calibration_count.unwrap_or(0);
            let k = leaf.calibration_error_count.unwrap_or(0);
            leaf.calibrated_uncertainty = Some(clopper_pearson_upper(k, n, confidence)?);
            Ok(())
        }
    }
}
