//! Fitting both wrapper models from train and calibration datasets.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::qim::{fit_calibrated, CalibratedTree, QimConfig, Sample};
use crate::simgen::tile_windows;
use crate::wrapper::{build_ta_training_table, ta_schema, TaqfKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub qim: QimConfig,
    pub taqf: Vec<TaqfKind>,
    /// Training series are cut into windows of this length before the
    /// timeseries-aware table is built, so buffer lengths match the
    /// subsampled calibration and test series. `None` replays whole series.
    pub train_window: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { qim: QimConfig::default(), taqf: TaqfKind::ALL.to_vec(), train_window: Some(10) }
    }
}

/// The stateless model and the timeseries-aware model of one wrapper.
#[derive(Clone, Debug, PartialEq)]
pub struct WrapperModels {
    pub stateless: CalibratedTree,
    pub ta: CalibratedTree,
}

/// One row per step: stateless quality factors, failed = outcome differs
/// from truth.
pub fn stateless_samples(dataset: &Dataset) -> Result<Vec<Sample>> {
    dataset.steps().map(|s| Ok(Sample::new(s.qf.to_row(&dataset.qf_schema)?, s.failed()))).collect()
}

pub fn check_compatible(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.qf_schema != b.qf_schema {
        return Err(Error::SchemaMismatch(format!(
            "{} and {} datasets have different quality factor schemas",
            a.split, b.split
        )));
    }
    if a.labels != b.labels {
        return Err(Error::SchemaMismatch(format!("{} and {} datasets have different label tables", a.split, b.split)));
    }
    Ok(())
}

pub fn fit_stateless(train: &Dataset, calibration: &Dataset, qim: &QimConfig) -> Result<CalibratedTree> {
    check_compatible(train, calibration)?;
    fit_calibrated(&train.qf_schema, &stateless_samples(train)?, &stateless_samples(calibration)?, qim)
}

pub fn fit_ta(
    train: &Dataset,
    calibration: &Dataset,
    stateless: &CalibratedTree,
    taqf: &[TaqfKind],
    qim: &QimConfig,
    train_window: Option<usize>,
) -> Result<CalibratedTree> {
    check_compatible(train, calibration)?;
    let schema = ta_schema(&train.qf_schema, taqf)?;
    let train_rows = match train_window {
        Some(len) => build_ta_training_table(&tile_windows(train, len)?, stateless, taqf)?,
        None => build_ta_training_table(train, stateless, taqf)?,
    };
    let cal_rows = build_ta_training_table(calibration, stateless, taqf)?;
    fit_calibrated(&schema, &train_rows, &cal_rows, qim)
}

pub fn fit_models(train: &Dataset, calibration: &Dataset, config: &PipelineConfig) -> Result<WrapperModels> {
    let stateless = fit_stateless(train, calibration, &config.qim)?;
    let ta = fit_ta(train, calibration, &stateless, &config.taqf, &config.qim, config.train_window)?;
    Ok(WrapperModels { stateless, ta })
}
