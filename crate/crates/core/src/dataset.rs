//! Domain types shared by every stage of the pipeline, plus dataset
//! validation and the JSON Lines file format.
//!
//! A dataset file starts with one header object
//! `{"labels": [...], "qf_schema": [...], "split": "..."}` followed by one
//! step record per line:
//!
//! ```text
//! {"series_id":"s0007","step":0,"truth":3,"outcome":3,"qf":{"rain":2,"blur":0},"u":0.0339}
//! ```
//!
//! `u` is optional. Records of one series are grouped in order of first
//! appearance; steps keep file order.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a dataset's label table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub u32);

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub id: LabelId,
    pub name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QfKind {
    /// Intensity code in `0..=3`, 0 meaning the factor is absent.
    Ordinal,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QfSpec {
    pub name: String,
    pub kind: QfKind,
}

impl QfSpec {
    pub fn ordinal(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: QfKind::Ordinal }
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: QfKind::Continuous }
    }
}

/// Highest ordinal intensity code.
pub const MAX_INTENSITY: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QfValue {
    Ordinal(u8),
    Continuous(f64),
}

impl QfValue {
    pub fn as_f64(self) -> f64 {
        match self {
            QfValue::Ordinal(v) => f64::from(v),
            QfValue::Continuous(v) => v,
        }
    }
}

/// Stateless quality factors of one input, keyed by factor name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityFactorVector(IndexMap<String, QfValue>);

impl QualityFactorVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: QfValue) {
        self.0.insert(name.into(), value);
    }

    pub fn with(mut self, name: impl Into<String>, value: QfValue) -> Self {
        self.insert(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<QfValue> {
        self.0.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, QfValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Values ordered by `schema`.
    pub fn to_row(&self, schema: &[QfSpec]) -> Result<Vec<f64>> {
        schema
            .iter()
            .map(|spec| {
                self.get(&spec.name)
                    .map(QfValue::as_f64)
                    .ok_or_else(|| Error::SchemaMismatch(format!("missing quality factor '{}'", spec.name)))
            })
            .collect()
    }
}

impl FromIterator<(String, QfValue)> for QualityFactorVector {
    fn from_iter<I: IntoIterator<Item = (String, QfValue)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// One timestep of one series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub series_id: String,
    #[serde(rename = "step")]
    pub step_index: usize,
    pub truth: LabelId,
    pub outcome: LabelId,
    pub qf: QualityFactorVector,
    #[serde(rename = "u", default, skip_serializing_if = "Option::is_none")]
    pub step_uncertainty: Option<f64>,
}

impl StepRecord {
    /// The classifier outcome disagrees with the ground truth.
    pub fn failed(&self) -> bool {
        self.outcome != self.truth
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeseries {
    pub series_id: String,
    pub steps: Vec<StepRecord>,
}

impl Timeseries {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn truth(&self) -> Option<LabelId> {
        self.steps.first().map(|s| s.truth)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Calibration,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Calibration => "calibration",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub labels: Vec<ClassLabel>,
    pub qf_schema: Vec<QfSpec>,
    pub split: Split,
    pub series: Vec<Timeseries>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    labels: Vec<ClassLabel>,
    qf_schema: Vec<QfSpec>,
    split: Split,
}

impl Dataset {
    pub fn n_steps(&self) -> usize {
        self.series.iter().map(Timeseries::len).sum()
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.series.iter().flat_map(|s| s.steps.iter())
    }

    /// Same labels and schema, different series and split.
    pub fn with_series(&self, split: Split, series: Vec<Timeseries>) -> Self {
        Self { labels: self.labels.clone(), qf_schema: self.qf_schema.clone(), split, series }
    }

    pub fn read_jsonl<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header_line = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(Error::Parse { line: 1, message: "missing header line".into() }),
            }
        };
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::Parse { line: 1, message: format!("bad header: {e}") })?;

        let mut grouped: IndexMap<String, Vec<StepRecord>> = IndexMap::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut record: StepRecord =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: idx + 2, message: e.to_string() })?;
            coerce_kinds(&mut record.qf, &header.qf_schema);
            grouped.entry(record.series_id.clone()).or_default().push(record);
        }

        let series = grouped.into_iter().map(|(series_id, steps)| Timeseries { series_id, steps }).collect();
        Ok(Self { labels: header.labels, qf_schema: header.qf_schema, split: header.split, series })
    }

    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        let header = Header { labels: self.labels.clone(), qf_schema: self.qf_schema.clone(), split: self.split };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for record in self.steps() {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_jsonl(File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }
}

// JSON does not distinguish `1` from `1.0` reliably across writers; the
// schema decides.
fn coerce_kinds(qf: &mut QualityFactorVector, schema: &[QfSpec]) {
    for spec in schema {
        if spec.kind == QfKind::Continuous {
            if let Some(v) = qf.0.get_mut(&spec.name) {
                *v = QfValue::Continuous(v.as_f64());
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    DuplicateLabelId,
    EmptyLabelName,
    EmptySeries,
    DuplicateSeriesId,
    SeriesIdMismatch,
    NonConsecutiveStep,
    TruthChanged,
    UnknownLabel,
    QfSchemaMismatch,
    OrdinalOutOfRange,
    NonFiniteContinuous,
    UncertaintyOutOfRange,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::DuplicateLabelId => "duplicate label id",
            Rule::EmptyLabelName => "empty label name",
            Rule::EmptySeries => "empty series",
            Rule::DuplicateSeriesId => "duplicate series_id",
            Rule::SeriesIdMismatch => "step series_id differs from its series",
            Rule::NonConsecutiveStep => "non-consecutive step_index",
            Rule::TruthChanged => "ground truth changes within series",
            Rule::UnknownLabel => "label not in label table",
            Rule::QfSchemaMismatch => "quality factors do not match schema",
            Rule::OrdinalOutOfRange => "ordinal value outside {0,1,2,3}",
            Rule::NonFiniteContinuous => "continuous value not finite",
            Rule::UncertaintyOutOfRange => "uncertainty out of [0,1]",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    /// `None` for label-table violations.
    pub series_id: Option<String>,
    pub step_index: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.series_id, self.step_index) {
            (Some(id), Some(step)) => write!(f, "series {id} step {step}: {}", self.rule)?,
            (Some(id), None) => write!(f, "series {id}: {}", self.rule)?,
            _ => write!(f, "{}", self.rule)?,
        }
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Checks every dataset invariant and lists the violations; empty means valid.
pub fn validate_dataset(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |series_id: Option<&str>, step_index: Option<usize>, rule: Rule, detail: String| {
        out.push(Violation { series_id: series_id.map(str::to_owned), step_index, rule, detail });
    };

    let mut label_ids = std::collections::HashSet::new();
    for label in &dataset.labels {
        if !label_ids.insert(label.id) {
            push(None, None, Rule::DuplicateLabelId, format!("id {}", label.id));
        }
        if label.name.is_empty() {
            push(None, None, Rule::EmptyLabelName, format!("id {}", label.id));
        }
    }

    let mut series_ids = std::collections::HashSet::new();
    for series in &dataset.series {
        let sid = Some(series.series_id.as_str());
        if !series_ids.insert(series.series_id.as_str()) {
            push(sid, None, Rule::DuplicateSeriesId, String::new());
        }
        let Some(first) = series.steps.first() else {
            push(sid, None, Rule::EmptySeries, String::new());
            continue;
        };
        for (pos, step) in series.steps.iter().enumerate() {
            let at = Some(step.step_index);
            if step.series_id != series.series_id {
                push(sid, at, Rule::SeriesIdMismatch, format!("record says '{}'", step.series_id));
            }
            if step.step_index != pos {
                push(sid, at, Rule::NonConsecutiveStep, format!("expected {pos}"));
            }
            if step.truth != first.truth {
                push(sid, at, Rule::TruthChanged, format!("{} -> {}", first.truth, step.truth));
            }
            for label in [step.truth, step.outcome] {
                if !label_ids.contains(&label) {
                    push(sid, at, Rule::UnknownLabel, format!("id {label}"));
                }
            }
            let names_match = step.qf.len() == dataset.qf_schema.len()
                && dataset.qf_schema.iter().all(|s| step.qf.get(&s.name).is_some());
            if !names_match {
                push(sid, at, Rule::QfSchemaMismatch, String::new());
            }
            for spec in &dataset.qf_schema {
                let Some(value) = step.qf.get(&spec.name) else { continue };
                match (spec.kind, value) {
                    (QfKind::Ordinal, QfValue::Ordinal(v)) if v <= MAX_INTENSITY => {}
                    (QfKind::Ordinal, v) => {
                        push(sid, at, Rule::OrdinalOutOfRange, format!("{} = {}", spec.name, v.as_f64()))
                    }
                    (QfKind::Continuous, v) if v.as_f64().is_finite() => {}
                    (QfKind::Continuous, _) => push(sid, at, Rule::NonFiniteContinuous, spec.name.clone()),
                }
            }
            if let Some(u) = step.step_uncertainty {
                if !(0.0..=1.0).contains(&u) {
                    push(sid, at, Rule::UncertaintyOutOfRange, format!("u = {u}"));
                }
            }
        }
    }
    out
}
