//! Timeseries-aware runtime.
//!
//! Each step of a series is first scored by the stateless quality impact
//! model, then appended to a per-series buffer. The buffer's fused outcome
//! (majority vote) and four timeseries-aware quality factors are fed,
//! together with the step's own quality factors, into a second calibrated
//! tree that estimates the uncertainty of the fused outcome.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelId, QfSpec, QualityFactorVector, StepRecord};
use crate::error::{domain, Error, Result};
use crate::fusion::{majority_vote, FusedOutcome};
use crate::qim::{CalibratedTree, Sample};

/// The four timeseries-aware quality factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaqfKind {
    Ratio,
    Length,
    Size,
    Certainty,
}

impl TaqfKind {
    pub const ALL: [TaqfKind; 4] = [TaqfKind::Ratio, TaqfKind::Length, TaqfKind::Size, TaqfKind::Certainty];

    /// Column name used in tree schemas.
    pub fn feature_name(self) -> &'static str {
        match self {
            TaqfKind::Ratio => "ta_ratio",
            TaqfKind::Length => "ta_length",
            TaqfKind::Size => "ta_size",
            TaqfKind::Certainty => "ta_certainty",
        }
    }

    pub fn from_feature_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.feature_name() == name)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            TaqfKind::Ratio => "ratio",
            TaqfKind::Length => "length",
            TaqfKind::Size => "size",
            TaqfKind::Certainty => "certainty",
        }
    }
}

impl fmt::Display for TaqfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TaqfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ratio" => Ok(TaqfKind::Ratio),
            "length" => Ok(TaqfKind::Length),
            "size" => Ok(TaqfKind::Size),
            "certainty" | "cumulative_certainty" => Ok(TaqfKind::Certainty),
            other => domain(format!("unknown timeseries-aware factor '{other}'")),
        }
    }
}

/// Parses a comma-separated factor list; the empty string is the empty set.
/// Result is sorted and deduplicated.
pub fn parse_taqf_list(text: &str) -> Result<Vec<TaqfKind>> {
    let mut kinds =
        text.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<Vec<TaqfKind>>>()?;
    kinds.sort();
    kinds.dedup();
    Ok(kinds)
}

/// Stateless schema followed by the selected timeseries-aware columns.
pub fn ta_schema(stateless: &[QfSpec], taqf: &[TaqfKind]) -> Result<Vec<QfSpec>> {
    if let Some(clash) = stateless.iter().find(|s| TaqfKind::from_feature_name(&s.name).is_some()) {
        return Err(Error::SchemaMismatch(format!(
            "quality factor '{}' clashes with a timeseries-aware column",
            clash.name
        )));
    }
    let mut schema = stateless.to_vec();
    schema.extend(taqf.iter().map(|k| QfSpec::continuous(k.feature_name())));
    Ok(schema)
}

/// Timeseries-aware factors used by a tree, in schema order.
pub fn taqf_of_schema(schema: &[QfSpec]) -> Vec<TaqfKind> {
    schema.iter().filter_map(|s| TaqfKind::from_feature_name(&s.name)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaqfVector {
    pub ratio: f64,
    pub length: usize,
    pub size: usize,
    pub cumulative_certainty: f64,
}

impl TaqfVector {
    pub fn get(&self, kind: TaqfKind) -> f64 {
        match kind {
            TaqfKind::Ratio => self.ratio,
            TaqfKind::Length => self.length as f64,
            TaqfKind::Size => self.size as f64,
            TaqfKind::Certainty => self.cumulative_certainty,
        }
    }
}

/// Share of outcomes that agree with the fused label.
pub fn taqf_ratio(outcomes: &[LabelId], fused: LabelId) -> Result<f64> {
    if outcomes.is_empty() {
        return domain("ratio of an empty outcome series");
    }
    let agreeing = outcomes.iter().filter(|&&o| o == fused).count();
    if agreeing == 0 {
        return domain(format!("fused label {fused} not among the outcomes"));
    }
    Ok(agreeing as f64 / outcomes.len() as f64)
}

pub fn taqf_length(buffer: &TimeseriesBuffer) -> Result<usize> {
    match buffer.len() {
        0 => domain("length of an empty buffer"),
        n => Ok(n),
    }
}

/// Number of distinct outcomes.
pub fn taqf_size(outcomes: &[LabelId]) -> Result<usize> {
    if outcomes.is_empty() {
        return domain("size of an empty outcome series");
    }
    let mut distinct = outcomes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    Ok(distinct.len())
}

/// Sum of `1 - u_j` over outcomes agreeing with the fused label;
/// disagreeing outcomes contribute zero.
pub fn taqf_cumulative_certainty(outcomes: &[LabelId], step_uncertainties: &[f64], fused: LabelId) -> Result<f64> {
    if outcomes.len() != step_uncertainties.len() {
        return domain(format!("{} outcomes but {} uncertainties", outcomes.len(), step_uncertainties.len()));
    }
    if outcomes.is_empty() {
        return domain("cumulative certainty of an empty series");
    }
    if let Some(u) = step_uncertainties.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return domain(format!("uncertainty {u} outside [0, 1]"));
    }
    Ok(outcomes.iter().zip(step_uncertainties).filter(|(&o, _)| o == fused).map(|(_, u)| 1.0 - u).sum())
}

/// What the wrapper reports for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrapperStepResult {
    pub fused: FusedOutcome,
    /// Stateless estimate for this step's own outcome.
    pub step_uncertainty: f64,
    /// Timeseries-aware estimate for the fused outcome.
    pub ta_uncertainty: f64,
    pub taqf: TaqfVector,
}

/// Interim results of the series currently being observed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeseriesBuffer {
    series_id: Option<String>,
    outcomes: Vec<LabelId>,
    step_uncertainties: Vec<f64>,
    fused: Option<FusedOutcome>,
}

impl TimeseriesBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn series_id(&self) -> Option<&str> {
        self.series_id.as_deref()
    }

    pub fn outcomes(&self) -> &[LabelId] {
        &self.outcomes
    }

    pub fn step_uncertainties(&self) -> &[f64] {
        &self.step_uncertainties
    }

    pub fn fused(&self) -> Option<&FusedOutcome> {
        self.fused.as_ref()
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Clears the buffer and starts tracking `series_id`.
    pub fn reset(&mut self, series_id: &str) {
        self.series_id = Some(series_id.to_owned());
        self.outcomes.clear();
        self.step_uncertainties.clear();
        self.fused = None;
    }

    /// Appends one outcome and its stateless uncertainty, then refreshes the
    /// fused outcome. Resets first if `series_id` changed.
    pub fn push(&mut self, series_id: &str, outcome: LabelId, step_uncertainty: f64) -> Result<&FusedOutcome> {
        if !(0.0..=1.0).contains(&step_uncertainty) {
            return domain(format!("uncertainty {step_uncertainty} outside [0, 1]"));
        }
        if self.series_id.as_deref() != Some(series_id) {
            self.reset(series_id);
        }
        self.outcomes.push(outcome);
        self.step_uncertainties.push(step_uncertainty);
        Ok(self.fused.insert(majority_vote(&self.outcomes)?))
    }

    pub fn taqf(&self) -> Result<TaqfVector> {
        let fused = self.fused.as_ref().ok_or_else(|| Error::Domain("empty buffer".into()))?.label;
        Ok(TaqfVector {
            ratio: taqf_ratio(&self.outcomes, fused)?,
            length: taqf_length(self)?,
            size: taqf_size(&self.outcomes)?,
            cumulative_certainty: taqf_cumulative_certainty(&self.outcomes, &self.step_uncertainties, fused)?,
        })
    }

    /// Scores `record` with the stateless tree and appends it.
    pub fn observe(
        &mut self,
        record: &StepRecord,
        stateless: &CalibratedTree,
    ) -> Result<(f64, FusedOutcome, TaqfVector)> {
        let u = stateless.predict_by_name(|name| record.qf.get(name).map(|v| v.as_f64()))?;
        let fused = self.push(&record.series_id, record.outcome, u)?.clone();
        Ok((u, fused, self.taqf()?))
    }

    /// Full wrapper step: stateless estimate, fusion, timeseries-aware estimate.
    pub fn process_step(
        &mut self,
        record: &StepRecord,
        stateless: &CalibratedTree,
        ta: &CalibratedTree,
    ) -> Result<WrapperStepResult> {
        let (step_uncertainty, fused, taqf) = self.observe(record, stateless)?;
        let ta_uncertainty = ta.predict_by_name(|name| ta_feature(&record.qf, &taqf, name))?;
        Ok(WrapperStepResult { fused, step_uncertainty, ta_uncertainty, taqf })
    }
}

fn ta_feature(qf: &QualityFactorVector, taqf: &TaqfVector, name: &str) -> Option<f64> {
    TaqfKind::from_feature_name(name).map(|k| taqf.get(k)).or_else(|| qf.get(name).map(|v| v.as_f64()))
}

/// Replays every series through a fresh buffer and emits one row per step:
/// the step's quality factors plus the selected timeseries-aware factors,
/// labelled with whether the fused outcome is wrong.
pub fn build_ta_training_table(
    dataset: &Dataset,
    stateless: &CalibratedTree,
    taqf: &[TaqfKind],
) -> Result<Vec<Sample>> {
    let schema = ta_schema(&dataset.qf_schema, taqf)?;
    let mut rows = Vec::with_capacity(dataset.n_steps());
    let mut buffer = TimeseriesBuffer::new();
    for series in &dataset.series {
        buffer.reset(&series.series_id);
        for record in &series.steps {
            let (_, fused, factors) = buffer.observe(record, stateless)?;
            let features = schema
                .iter()
                .map(|s| {
                    ta_feature(&record.qf, &factors, &s.name)
                        .ok_or_else(|| Error::SchemaMismatch(format!("missing quality factor '{}'", s.name)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(Sample::new(features, fused.label != record.truth));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassLabel, QfValue, Split, Timeseries};
    use crate::qim::{calibrate_tree, Leaf, TreeNode};

    const A: LabelId = LabelId(0);
    const B: LabelId = LabelId(1);
    const C: LabelId = LabelId(2);

    fn constant_tree(schema: Vec<QfSpec>, errors: u64) -> CalibratedTree {
        let cal: Vec<Sample> = (0..200).map(|i| Sample::new(vec![0.0; schema.len()], (i as u64) < errors)).collect();
        calibrate_tree(&TreeNode::Leaf(Leaf::default()), &schema, &cal, 200, 0.999).unwrap()
    }

    fn record(series: &str, step: usize, truth: LabelId, outcome: LabelId) -> StepRecord {
        StepRecord {
            series_id: series.into(),
            step_index: step,
            truth,
            outcome,
            qf: QualityFactorVector::new().with("rain", QfValue::Ordinal(1)),
            step_uncertainty: None,
        }
    }

    fn trees() -> (CalibratedTree, CalibratedTree) {
        let stateless_schema = vec![QfSpec::ordinal("rain")];
        let ta = ta_schema(&stateless_schema, &TaqfKind::ALL).unwrap();
        (constant_tree(stateless_schema, 0), constant_tree(ta, 10))
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(taqf_ratio(&[A], A).unwrap(), 1.0);
        assert_eq!(taqf_ratio(&[A, A, B], A).unwrap(), 2.0 / 3.0);
        assert_eq!(taqf_ratio(&[A, B, C], C).unwrap(), 1.0 / 3.0);
        assert!(taqf_ratio(&[], A).is_err());
    }

    #[test]
    fn length_examples() {
        let mut buf = TimeseriesBuffer::new();
        assert!(taqf_length(&buf).is_err());
        buf.push("s", A, 0.1).unwrap();
        assert_eq!(taqf_length(&buf).unwrap(), 1);
        for _ in 0..9 {
            buf.push("s", A, 0.1).unwrap();
        }
        assert_eq!(taqf_length(&buf).unwrap(), 10);
        buf.reset("t");
        for _ in 0..3 {
            buf.push("t", B, 0.1).unwrap();
        }
        assert_eq!(taqf_length(&buf).unwrap(), 3);
    }

    #[test]
    fn size_examples() {
        assert_eq!(taqf_size(&[A, A, A]).unwrap(), 1);
        assert_eq!(taqf_size(&[A, B, A]).unwrap(), 2);
        assert_eq!(taqf_size(&[A, B, C]).unwrap(), 3);
        assert!(taqf_size(&[]).is_err());
    }

    #[test]
    fn certainty_examples() {
        assert!((taqf_cumulative_certainty(&[A], &[0.1], A).unwrap() - 0.9).abs() < 1e-15);
        assert!((taqf_cumulative_certainty(&[A, B, A], &[0.1, 0.2, 0.3], A).unwrap() - 1.6).abs() < 1e-15);
        assert_eq!(taqf_cumulative_certainty(&[B, B], &[0.0, 0.0], B).unwrap(), 2.0);
        assert!(taqf_cumulative_certainty(&[A, B], &[0.1], A).is_err());
    }

    #[test]
    fn first_step_of_series() {
        let (s, t) = trees();
        let mut buf = TimeseriesBuffer::new();
        let r = buf.process_step(&record("x", 0, A, B), &s, &t).unwrap();
        assert_eq!(r.fused.label, B);
        let u0 = r.step_uncertainty;
        assert_eq!(r.taqf, TaqfVector { ratio: 1.0, length: 1, size: 1, cumulative_certainty: 1.0 - u0 });
        assert_eq!(r.ta_uncertainty, crate::qim::clopper_pearson_upper(10, 200, 0.999).unwrap());
    }

    #[test]
    fn recency_tie_at_second_step() {
        let (s, t) = trees();
        let mut buf = TimeseriesBuffer::new();
        buf.process_step(&record("x", 0, A, A), &s, &t).unwrap();
        let r = buf.process_step(&record("x", 1, A, B), &s, &t).unwrap();
        assert_eq!(r.fused.label, B);
        assert!(r.fused.tie_broken);
        assert_eq!(r.taqf.ratio, 0.5);
        assert_eq!(r.taqf.size, 2);
    }

    #[test]
    fn new_series_resets_buffer() {
        let (s, t) = trees();
        let mut buf = TimeseriesBuffer::new();
        for i in 0..4 {
            buf.process_step(&record("x", i, A, if i % 2 == 0 { A } else { C }), &s, &t).unwrap();
        }
        let r = buf.process_step(&record("y", 0, B, B), &s, &t).unwrap();
        assert_eq!((r.taqf.length, r.taqf.size), (1, 1));
        assert_eq!(buf.series_id(), Some("y"));
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let (s, t) = trees();
        let mut rec = record("x", 0, A, A);
        rec.qf = QualityFactorVector::new().with("fog", QfValue::Ordinal(1));
        assert!(matches!(TimeseriesBuffer::new().process_step(&rec, &s, &t), Err(Error::SchemaMismatch(_))));
        assert!(ta_schema(&[QfSpec::ordinal("ta_ratio")], &[]).is_err());
    }

    fn dataset(series: Vec<Vec<(LabelId, LabelId)>>) -> Dataset {
        Dataset {
            labels: (0..3).map(|i| ClassLabel { id: LabelId(i), name: format!("c{i}") }).collect(),
            qf_schema: vec![QfSpec::ordinal("rain")],
            split: Split::Train,
            series: series
                .into_iter()
                .enumerate()
                .map(|(i, steps)| {
                    let id = format!("s{i}");
                    let steps = steps.into_iter().enumerate().map(|(j, (t, o))| record(&id, j, t, o)).collect();
                    Timeseries { series_id: id, steps }
                })
                .collect(),
        }
    }

    #[test]
    fn training_table_examples() {
        let (s, _) = trees();
        let u0 = s.predict_uncertainty(&[1.0]).unwrap();

        let rows = build_ta_training_table(&dataset(vec![vec![(A, A)]]), &s, &TaqfKind::ALL).unwrap();
        assert_eq!(rows, vec![Sample::new(vec![1.0, 1.0, 1.0, 1.0, 1.0 - u0], false)]);

        let rows = build_ta_training_table(&dataset(vec![vec![(A, A); 3]]), &s, &TaqfKind::ALL).unwrap();
        assert!(rows.iter().all(|r| !r.failed));

        let rows = build_ta_training_table(&dataset(vec![vec![(A, A), (A, B), (A, B)]]), &s, &TaqfKind::ALL).unwrap();
        let labels: Vec<bool> = rows.iter().map(|r| r.failed).collect();
        assert_eq!(labels, vec![false, true, true]);

        let rows = build_ta_training_table(&dataset(vec![vec![(A, A)]]), &s, &[TaqfKind::Certainty]).unwrap();
        assert_eq!(rows[0].features, vec![1.0, 1.0 - u0]);
    }

    #[test]
    fn parse_lists() {
        assert_eq!(parse_taqf_list("").unwrap(), vec![]);
        assert_eq!(parse_taqf_list("certainty,ratio").unwrap(), vec![TaqfKind::Ratio, TaqfKind::Certainty]);
        assert_eq!(parse_taqf_list("ratio,length,size,certainty").unwrap(), TaqfKind::ALL.to_vec());
        assert!(parse_taqf_list("ratio,colour").is_err());
    }
}
