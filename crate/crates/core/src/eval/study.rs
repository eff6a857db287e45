//! Replaying a test set through the wrapper and scoring the fusion
//! conditions against each other.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{brier_score, ScoredCase};
use crate::dataset::{Dataset, LabelId};
use crate::error::{domain, Error, Result};
use crate::fusion::UfRule;
use crate::pipeline::{check_compatible, fit_ta};
use crate::qim::{CalibratedTree, QimConfig};
use crate::wrapper::{TaqfKind, TimeseriesBuffer};

/// Everything the wrapper and the baselines report for one test step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub series_id: String,
    pub step_index: usize,
    pub truth: LabelId,
    pub outcome: LabelId,
    pub fused: LabelId,
    pub step_uncertainty: f64,
    pub ta_uncertainty: f64,
    pub naive: f64,
    pub opportune: f64,
    pub worstcase: f64,
}

impl StepTrace {
    pub fn isolated_failed(&self) -> bool {
        self.outcome != self.truth
    }

    pub fn fused_failed(&self) -> bool {
        self.fused != self.truth
    }
}

/// Runs every series through a fresh buffer; one trace per step.
pub fn replay(dataset: &Dataset, stateless: &CalibratedTree, ta: &CalibratedTree) -> Result<Vec<Vec<StepTrace>>> {
    let mut buffer = TimeseriesBuffer::new();
    dataset
        .series
        .iter()
        .map(|series| {
            buffer.reset(&series.series_id);
            series
                .steps
                .iter()
                .map(|record| {
                    let r = buffer.process_step(record, stateless, ta)?;
                    let us = buffer.step_uncertainties();
                    Ok(StepTrace {
                        series_id: record.series_id.clone(),
                        step_index: record.step_index,
                        truth: record.truth,
                        outcome: record.outcome,
                        fused: r.fused.label,
                        step_uncertainty: r.step_uncertainty,
                        ta_uncertainty: r.ta_uncertainty,
                        naive: UfRule::Naive.apply(us)?,
                        opportune: UfRule::Opportune.apply(us)?,
                        worstcase: UfRule::WorstCase.apply(us)?,
                    })
                })
                .collect()
        })
        .collect()
}

/// Evaluation conditions: isolated or fused outcomes, scored with one of
/// the uncertainty sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Isolated outcomes, stateless per-step uncertainty.
    Stateless,
    /// Fused outcome, stateless uncertainty of the current step.
    Fused,
    Naive,
    WorstCase,
    Opportune,
    /// Fused outcome, timeseries-aware uncertainty.
    Tauw,
}

/// Uncertainty source selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UfChoice {
    None,
    Naive,
    Opportune,
    WorstCase,
    Tauw,
}

impl FromStr for UfChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(UfChoice::None),
            "naive" => Ok(UfChoice::Naive),
            "opportune" => Ok(UfChoice::Opportune),
            "worstcase" => Ok(UfChoice::WorstCase),
            "tauw" => Ok(UfChoice::Tauw),
            other => domain(format!("unknown uncertainty fusion '{other}'")),
        }
    }
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::Stateless,
        Condition::Fused,
        Condition::Naive,
        Condition::WorstCase,
        Condition::Opportune,
        Condition::Tauw,
    ];

    /// Every uncertainty fusion needs fused outcomes to score against.
    pub fn from_flags(fusion: bool, uf: UfChoice) -> Result<Self> {
        Ok(match (fusion, uf) {
            (false, UfChoice::None) => Condition::Stateless,
            (false, other) => return domain(format!("uncertainty fusion '{other:?}' requires information fusion")),
            (true, UfChoice::None) => Condition::Fused,
            (true, UfChoice::Naive) => Condition::Naive,
            (true, UfChoice::Opportune) => Condition::Opportune,
            (true, UfChoice::WorstCase) => Condition::WorstCase,
            (true, UfChoice::Tauw) => Condition::Tauw,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Stateless => "stateless",
            Condition::Fused => "if",
            Condition::Naive => "if_naive",
            Condition::WorstCase => "if_worstcase",
            Condition::Opportune => "if_opportune",
            Condition::Tauw => "if_tauw",
        }
    }

    pub fn case(self, t: &StepTrace) -> ScoredCase {
        match self {
            Condition::Stateless => ScoredCase::new(t.step_uncertainty, t.isolated_failed()),
            Condition::Fused => ScoredCase::new(t.step_uncertainty, t.fused_failed()),
            Condition::Naive => ScoredCase::new(t.naive, t.fused_failed()),
            Condition::WorstCase => ScoredCase::new(t.worstcase, t.fused_failed()),
            Condition::Opportune => ScoredCase::new(t.opportune, t.fused_failed()),
            Condition::Tauw => ScoredCase::new(t.ta_uncertainty, t.fused_failed()),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn cases(traces: &[Vec<StepTrace>], condition: Condition) -> Vec<ScoredCase> {
    traces.iter().flatten().map(|t| condition.case(t)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRate {
    /// 1-based position in the series.
    pub step: usize,
    pub isolated_rate: f64,
    pub fused_rate: f64,
}

/// Per-position misclassification rates of isolated and fused outcomes.
/// All series must have the same length.
pub fn misclassification_by_step(traces: &[Vec<StepTrace>]) -> Result<Vec<StepRate>> {
    let Some(first) = traces.first() else {
        return domain("no series");
    };
    let len = first.len();
    if let Some(bad) = traces.iter().find(|s| s.len() != len) {
        return domain(format!("ragged series lengths ({} vs {len})", bad.len()));
    }
    let n = traces.len() as f64;
    Ok((0..len)
        .map(|t| StepRate {
            step: t + 1,
            isolated_rate: traces.iter().filter(|s| s[t].isolated_failed()).count() as f64 / n,
            fused_rate: traces.iter().filter(|s| s[t].fused_failed()).count() as f64 / n,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub ratio: bool,
    pub length: bool,
    pub size: bool,
    pub certainty: bool,
    pub brier: f64,
}

impl ImportanceRow {
    pub fn subset(&self) -> Vec<TaqfKind> {
        TaqfKind::ALL
            .into_iter()
            .zip([self.ratio, self.length, self.size, self.certainty])
            .filter_map(|(k, used)| used.then_some(k))
            .collect()
    }
}

/// All 16 subsets of the timeseries-aware factors, fewest features first.
pub fn taqf_subsets() -> Vec<Vec<TaqfKind>> {
    let mut masks: Vec<u32> = (0..16).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
        .into_iter()
        .map(|m| TaqfKind::ALL.into_iter().enumerate().filter(|(i, _)| m & (1 << i) != 0).map(|(_, k)| k).collect())
        .collect()
}

/// Refits and recalibrates the timeseries-aware tree for every factor
/// subset and scores its fused-outcome uncertainty on `test`. Subsets run
/// in parallel; each fit is deterministic.
pub fn feature_importance_study(
    train: &Dataset,
    calibration: &Dataset,
    test: &Dataset,
    stateless: &CalibratedTree,
    qim: &QimConfig,
    train_window: Option<usize>,
) -> Result<Vec<ImportanceRow>> {
    check_compatible(train, test)?;
    taqf_subsets()
        .into_par_iter()
        .map(|subset| {
            let ta = fit_ta(train, calibration, stateless, &subset, qim, train_window)?;
            let traces = replay(test, stateless, &ta)?;
            let brier = brier_score(&cases(&traces, Condition::Tauw))?;
            let has = |k| subset.contains(&k);
            Ok(ImportanceRow {
                ratio: has(TaqfKind::Ratio),
                length: has(TaqfKind::Length),
                size: has(TaqfKind::Size),
                certainty: has(TaqfKind::Certainty),
                brier,
            })
        })
        .collect()
}
