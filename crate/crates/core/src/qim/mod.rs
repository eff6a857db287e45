//! Quality impact model: a CART tree on quality factors with a binary
//! failure target, pruned and calibrated on held-out data so that every
//! leaf carries a high-confidence upper bound on its failure probability.

mod bounds;
mod calibrate;
mod cart;

pub use bounds::{binomial_cdf, clopper_pearson_upper, clopper_pearson_upper_bisect, gini_impurity};
pub use calibrate::{calibrate_tree, CalibratedTree};
pub use cart::{fit_tree, Leaf, Sample, TreeNode};

/// Hyperparameters for fitting and calibrating a quality impact model.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QimConfig {
    pub max_depth: usize,
    pub min_leaf: u64,
    pub confidence: f64,
}

impl Default for QimConfig {
    fn default() -> Self {
        Self { max_depth: 8, min_leaf: 200, confidence: 0.999 }
    }
}

/// Fits on `train` and calibrates on `calibration` in one go.
pub fn fit_calibrated(
    schema: &[crate::dataset::QfSpec],
    train: &[Sample],
    calibration: &[Sample],
    config: &QimConfig,
) -> crate::Result<CalibratedTree> {
    let names: Vec<String> = schema.iter().map(|s| s.name.clone()).collect();
    let tree = fit_tree(train, &names, config.max_depth)?;
    calibrate_tree(&tree, schema, calibration, config.min_leaf, config.confidence)
}
